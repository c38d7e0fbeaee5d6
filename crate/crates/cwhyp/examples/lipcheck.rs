fn main() {
    let spec = cwhyp::systems::MapSpec::torus(1.0);
    let h = cwhyp::conjugacy::Semiconjugacy::solve(&spec, 30).unwrap();
    println!("lip estimate = {}", h.lipschitz_estimate());
    println!("trunc = {:e}", h.truncation_bound());
}
