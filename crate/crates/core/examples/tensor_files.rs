//! Writes and reads FTZ tensor files and shows the header bytes.

use ffvt::tensor::ftz;
use ffvt::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let t = Tensor::<f32>::from_fn([2, 3], |i| i as f32 * 0.5)?;
    let path = dir.path().join("t.ftz");
    ftz::write(&path, &t)?;

    let bytes = std::fs::read(&path)?;
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    println!("magic  {:?}", String::from_utf8_lossy(&bytes[..8]));
    println!("header {}", String::from_utf8_lossy(&bytes[16..16 + len]));
    println!("{} data bytes", bytes.len() - 16 - len);

    let stored = ftz::read_stored(&path)?;
    println!("dtype {:?}", stored.dtype());
    let back: Tensor<f64> = stored.into_tensor();
    println!("as f64 {:?} {:?}", back.shape(), back.data());
    Ok(())
}
