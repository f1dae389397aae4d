use std::sync::Arc;

use super::{Endpoint, Links, Mailbox, Rank, TransportError};
use crate::wire::Frame;

pub(crate) struct InprocLinks {
    mailboxes: Arc<[Arc<Mailbox>]>,
}

impl InprocLinks {
    pub(crate) fn send(&self, dest: Rank, frame: Frame) -> Result<(), TransportError> {
        self.mailboxes[dest as usize].deliver(frame);
        Ok(())
    }

    pub(crate) fn shutdown(&self) {
        for mb in self.mailboxes.iter() {
            mb.fail(TransportError::WorldShutdown);
        }
    }
}

/// Creates a fully connected world of `n` endpoints in this process.
/// Endpoint `i` has rank `i`; frames are handed over without serialization.
pub fn spawn_inproc_world(n: u32) -> Result<Vec<Endpoint>, TransportError> {
    if n == 0 {
        return Err(TransportError::EmptyWorld);
    }
    let mailboxes: Arc<[Arc<Mailbox>]> = (0..n).map(|_| Arc::new(Mailbox::new(n))).collect();
    Ok((0..n)
        .map(|rank| {
            Endpoint::new(
                rank,
                n,
                Arc::clone(&mailboxes[rank as usize]),
                Links::InProc(InprocLinks {
                    mailboxes: Arc::clone(&mailboxes),
                }),
            )
        })
        .collect())
}

/// Runs `rank_main` once per rank of a fresh in-process world, each on its
/// own thread, and returns the results in rank order.
///
/// Panics in a rank thread are propagated after the world is shut down so
/// that the remaining ranks are released.
pub fn run_inproc_world<R, F>(n: u32, rank_main: F) -> Result<Vec<R>, TransportError>
where
    R: Send,
    F: Fn(Endpoint) -> R + Sync,
{
    let world = spawn_inproc_world(n)?;
    let shutdown = InprocLinks {
        mailboxes: match &world[0].links {
            Links::InProc(l) => Arc::clone(&l.mailboxes),
            Links::Tcp(_) => unreachable!(),
        },
    };
    let rank_main = &rank_main;
    let shutdown = &shutdown;
    Ok(std::thread::scope(|s| {
        let handles: Vec<_> = world
            .into_iter()
            .map(|ep| {
                s.spawn(move || {
                    let guard = ShutdownOnPanic(shutdown);
                    let out = rank_main(ep);
                    std::mem::forget(guard);
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    }))
}

struct ShutdownOnPanic<'a>(&'a InprocLinks);

impl Drop for ShutdownOnPanic<'_> {
    fn drop(&mut self) {
        self.0.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::types::TypeHash;
    use crate::wire::FrameKind;

    fn data(tag: u32, payload: Vec<u8>) -> Frame {
        Frame {
            kind: FrameKind::Data,
            source: 0,
            context: 1,
            tag,
            type_hash: TypeHash(0),
            element_count: payload.len() as u64,
            payload,
        }
    }

    #[test]
    fn run_world_collects_in_rank_order() {
        let ranks = run_inproc_world(3, |ep| ep.rank() * 10).unwrap();
        assert_eq!(ranks, [0, 10, 20]);
    }

    #[test]
    fn panicking_rank_releases_peers() {
        let r = std::panic::catch_unwind(|| {
            run_inproc_world(2, |ep| {
                if ep.rank() == 0 {
                    panic!("boom");
                }
                ep.recv_match(FrameKind::Data, 0, 1, 0).map(|_| ())
            })
        });
        assert!(r.is_err());
    }

    #[test]
    fn world_construction() {
        assert_eq!(
            spawn_inproc_world(0).unwrap_err(),
            TransportError::EmptyWorld
        );
        let one = spawn_inproc_world(1).unwrap();
        assert_eq!((one[0].rank(), one[0].world_size()), (0, 1));
        let four = spawn_inproc_world(4).unwrap();
        for (i, ep) in four.iter().enumerate() {
            assert_eq!(ep.rank(), i as u32);
            assert_eq!(ep.world_size(), 4);
        }
    }

    #[test]
    fn delivered_exactly_once() {
        let world = spawn_inproc_world(4).unwrap();
        world[0].send_frame(3, data(0, vec![1])).unwrap();
        assert_eq!(world[3].pending(), 1);
        assert_eq!(
            world[1].pending() + world[2].pending() + world[0].pending(),
            0
        );
        let f = world[3].recv_match(FrameKind::Data, 0, 1, 0).unwrap();
        assert_eq!(f.payload, [1]);
        assert_eq!(world[3].pending(), 0);
    }

    #[test]
    fn self_send() {
        let world = spawn_inproc_world(2).unwrap();
        let f = data(4, vec![1, 2, 3]);
        world[1].send_frame(1, f.clone()).unwrap();
        let got = world[1].recv_match(FrameKind::Data, 1, 1, 4).unwrap();
        assert_eq!(got, Frame { source: 1, ..f });
    }

    #[test]
    fn invalid_ranks() {
        let world = spawn_inproc_world(2).unwrap();
        assert_eq!(
            world[0].send_frame(2, data(0, vec![])),
            Err(TransportError::InvalidDestination {
                dest: 2,
                world_size: 2
            })
        );
        assert!(matches!(
            world[0].recv_match(FrameKind::Data, 5, 1, 0),
            Err(TransportError::InvalidSource { rank: 5, .. })
        ));
    }

    #[test]
    fn non_matching_frames_stay_put() {
        let mut world = spawn_inproc_world(2).unwrap();
        let b = world.pop().unwrap();
        let a = world.pop().unwrap();
        a.send_frame(1, data(5, vec![5])).unwrap();
        let rx = std::thread::spawn(move || {
            let f = b.recv_match(FrameKind::Data, 0, 1, 7).unwrap();
            (f, b)
        });
        std::thread::sleep(Duration::from_millis(20));
        a.send_frame(1, data(7, vec![7])).unwrap();
        let (f, b) = rx.join().unwrap();
        assert_eq!(f.payload, [7]);
        assert_eq!(b.pending(), 1);
        assert_eq!(b.recv_match(FrameKind::Data, 0, 1, 5).unwrap().payload, [5]);
    }

    #[test]
    fn empty_mailbox_blocks() {
        let world = spawn_inproc_world(2).unwrap();
        let err = world[1]
            .recv_match_timeout(FrameKind::Data, 0, 1, 0, Duration::from_millis(30))
            .unwrap_err();
        assert_eq!(err, TransportError::Timeout(Duration::from_millis(30)));
    }

    #[test]
    fn shutdown_wakes_blocked_receiver() {
        let mut world = spawn_inproc_world(2).unwrap();
        let b = world.pop().unwrap();
        let a = world.pop().unwrap();
        let rx = std::thread::spawn(move || b.recv_match(FrameKind::Data, 0, 1, 0));
        std::thread::sleep(Duration::from_millis(20));
        a.shutdown_world();
        assert_eq!(rx.join().unwrap(), Err(TransportError::WorldShutdown));
        assert_eq!(
            a.send_frame(1, data(0, vec![])),
            Err(TransportError::WorldShutdown)
        );
    }
}
