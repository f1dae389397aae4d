use tmpc::{spawn_inproc_world, TypedCommunicator};

fn main() {
    let world = spawn_inproc_world(1).unwrap();
    let _comm = TypedCommunicator::<String>::new(&world[0]).unwrap();
}
