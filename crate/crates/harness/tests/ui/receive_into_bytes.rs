use tmpc::{spawn_inproc_world, TypedCommunicator};

fn main() {
    let world = spawn_inproc_world(1).unwrap();
    let comm = TypedCommunicator::<u32>::new(&world[0]).unwrap();
    let mut raw = vec![0_u8; 16];
    comm.receive(&mut raw, 0, 0).unwrap();
}
