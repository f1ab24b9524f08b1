//! Pushes a few points through the α-projection onto a small polytope and
//! checks the backward pass against finite differences.

use tsg::projection::{alpha_backward, alpha_forward, softmax, Polytope};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Simplex in R^3 with the extra requirement y0 + y1 >= 0.6.
    let rows = vec![vec![-1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, -1.0], vec![-1.0, -1.0, 0.0]];
    let bounds = vec![0.0, 0.0, 0.0, -0.6];
    let poly = Polytope::new(3, rows, bounds)?;
    println!("anchor {:?}, radius {:.4}", poly.anchor(), poly.chebyshev_radius());

    for logits in [[2.0, 1.0, 0.0], [0.0, 0.0, 3.0], [-1.0, 0.5, 2.0]] {
        let s = softmax(&logits);
        let fwd = alpha_forward(&s, &poly)?;
        println!(
            "s = [{:.3}, {:.3}, {:.3}] -> y = [{:.3}, {:.3}, {:.3}], alpha = {:.4}, tight {:?}",
            s[0], s[1], s[2], fwd.y[0], fwd.y[1], fwd.y[2], fwd.alpha, fwd.tight
        );
        assert!(poly.contains(&fwd.y, 1e-12));

        // d(y·w)/ds against central differences.
        let w = [1.0, -2.0, 0.5];
        let grad = alpha_backward(&s, &poly, &fwd, &w);
        let h = 1e-6;
        for i in 0..3 {
            let (mut up, mut down) = (s.to_vec(), s.to_vec());
            up[i] += h;
            down[i] -= h;
            let f = |x: &[f64]| -> f64 { alpha_forward(x, &poly).unwrap().y.iter().zip(&w).map(|(a, b)| a * b).sum() };
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            println!("    ds{i}: analytic {:+.6}, numeric {:+.6}", grad[i], fd);
        }
    }
    Ok(())
}
