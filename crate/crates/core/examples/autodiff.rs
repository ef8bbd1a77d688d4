//! Reverse-mode gradients of a tiny two-layer network on the tape.

use ffvt::autodiff::Tape;
use ffvt::Tensor;

fn main() -> ffvt::Result<()> {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_rows(&[vec![1.0, -2.0, 0.5]])?);
    let w1 = tape.param(Tensor::from_rows(&[vec![0.2, -0.1], vec![0.4, 0.3], vec![-0.5, 0.1]])?);
    let w2 = tape.param(Tensor::from_rows(&[vec![1.0, -1.0, 0.5], vec![0.3, 0.8, -0.2]])?);

    let h = tape.matmul(x, w1)?;
    let h = tape.gelu(h)?;
    let logits = tape.matmul(h, w2)?;
    let logits = tape.reshape(logits, &[3])?;
    let loss = tape.cross_entropy(logits, 2)?;

    let grads = tape.backward(loss)?;
    println!("loss {:.6}  ({} tape nodes)", tape.value(loss).item()?, tape.len());
    println!("dL/dW1 {:?}", grads.get(w1).data());
    println!("dL/dW2 {:?}", grads.get(w2).data());
    Ok(())
}
