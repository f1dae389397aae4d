use tmpc::{spawn_inproc_world, TypedCommunicator};

fn main() {
    let world = spawn_inproc_world(1).unwrap();
    let comm = TypedCommunicator::<f32>::new(&world[0]).unwrap();
    let grid = [[1_i32; 2]; 3];
    comm.send(&grid, 0, 0).unwrap();
}
