use tmpc::{spawn_inproc_world, TypedCommunicator};

fn main() {
    let world = spawn_inproc_world(1).unwrap();
    let comm = TypedCommunicator::<f32>::new(&world[0]).unwrap();
    comm.send(&[[1.0_f32; 2]; 3], 0, 0).unwrap();
    let mut y = vec![[0.0_f32; 3]; 2];
    comm.receive(&mut y, 0, 0).unwrap();
}
