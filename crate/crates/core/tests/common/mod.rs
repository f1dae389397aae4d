#![allow(dead_code)]

use std::net::TcpListener;
use std::time::Duration;

use proptest::prelude::*;
use tmpc::{
    connect_tcp_world, run_inproc_world, Endpoint, FundamentalKind, TcpOptions, TypeDescriptor,
};

pub fn free_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

pub fn tcp_options() -> TcpOptions {
    TcpOptions {
        connect_timeout: Duration::from_secs(10),
    }
}

/// Runs `f` on every rank of a loopback TCP world, one thread per rank.
pub fn run_tcp<R, F>(n: u32, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Endpoint) -> R + Sync,
{
    let addr = free_addr();
    let f = &f;
    let addr = &addr;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|rank| {
                s.spawn(move || {
                    let ep = connect_tcp_world(addr.as_str(), rank, n, &tcp_options())
                        .expect("tcp world");
                    f(ep)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

pub fn run_inproc<R, F>(n: u32, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Endpoint) -> R + Sync,
{
    run_inproc_world(n, f).unwrap()
}

/// Same program on both backends.
pub fn run_both<R, F>(n: u32, f: F) -> [Vec<R>; 2]
where
    R: Send,
    F: Fn(Endpoint) -> R + Sync,
{
    [run_inproc(n, &f), run_tcp(n, &f)]
}

pub fn kind() -> impl Strategy<Value = FundamentalKind> {
    prop::sample::select(FundamentalKind::ALL.to_vec())
}

/// Descriptors of depth at most 4, arrays up to 8 long, records up to 5 fields.
pub fn descriptor() -> impl Strategy<Value = TypeDescriptor> {
    let leaf = kind().prop_map(TypeDescriptor::fundamental);
    leaf.prop_recursive(3, 64, 5, |inner| {
        prop_oneof![
            (inner.clone(), 1usize..=8).prop_map(|(e, n)| TypeDescriptor::array(e, n).unwrap()),
            prop::collection::vec(inner, 1..=5).prop_map(|fields| {
                TypeDescriptor::record(
                    fields
                        .into_iter()
                        .enumerate()
                        .map(|(i, d)| (format!("f{i}"), d)),
                )
                .unwrap()
            }),
        ]
    })
}
