//! Chebyshev centres: the unit hypercube and a cut simplex.

use tsg::projection::{chebyshev_center, chebyshev_center_unrestricted, nonnegativity_rows};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in 2..=6 {
        let mut rows = Vec::new();
        let mut bounds = Vec::new();
        for i in 0..d {
            let mut up = vec![0.0; d];
            up[i] = 1.0;
            let down: Vec<f64> = up.iter().map(|v| -v).collect();
            rows.extend([up, down]);
            bounds.extend([1.0, 0.0]);
        }
        let c = chebyshev_center_unrestricted(d, &rows, &bounds)?;
        println!("cube d={d}: radius {:.6}, centre {:?}", c.radius, c.point);
    }

    // Simplex in R^3, with the first coordinate at most 0.2.
    let (mut rows, mut bounds) = nonnegativity_rows(3);
    rows.push(vec![1.0, 0.0, 0.0]);
    bounds.push(0.2);
    let c = chebyshev_center(3, &rows, &bounds)?;
    println!("cut simplex: radius {:.6}, centre {:?}", c.radius, c.point);
    Ok(())
}
