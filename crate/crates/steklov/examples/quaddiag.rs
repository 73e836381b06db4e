// scratch diagnostic (will be replaced)
use steklov::spectral::radial_eigenvalues;

fn main() {
    for kappa in [-1i32, 1, -2, 2, -3, 3] {
        let mit = radial_eigenvalues(1.0, 1.0, None, kappa, (1.0, 5.0), 3).unwrap();
        let step = radial_eigenvalues(1.0, 1.0, Some(201.0), kappa, (1.0, 5.0), 3).unwrap();
        println!("kappa {kappa}: bag wall {mit:?}");
        println!("kappa {kappa}: step M=200 {step:?}");
    }
}
