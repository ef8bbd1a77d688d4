//! SAWS and MAWS on two hand-built score matrices.
//!
//! The second matrix is where they disagree: token 3 gets the class token's
//! strongest attention, but token 1 is the one that attends back to it.

use ffvt::select::{maws, mutual_attention, saws};
use ffvt::Tensor;

fn show(name: &str, rows: Vec<Vec<f64>>) -> ffvt::Result<()> {
    let a = Tensor::from_rows(&rows)?;
    let ma = mutual_attention(&a)?;
    println!("{name}");
    for (i, r) in rows.iter().enumerate() {
        println!("  {r:?}   ma = {:.4}", ma[i]);
    }
    println!("  saws K=1 -> {:?}", saws(&a, 1)?.indices);
    let m = maws(&a, 2)?;
    println!("  maws K=2 -> {:?} weights {:.4?}", m.indices, m.weights);
    Ok(())
}

fn main() -> ffvt::Result<()> {
    show("gamma", vec![vec![1., 2., 3., 4.], vec![1., 2., 3., 4.], vec![1., 2., 3., 4.], vec![1., 4., 1., 1.]])?;
    show("divergent", vec![vec![1., 2., 3., 4.], vec![9., 0., 0., 0.], vec![1., 0., 0., 0.], vec![1., 0., 0., 0.]])
}
