use ffvt::Tensor;
use proptest::prelude::*;

pub fn matrix(n: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-4.0f64..4.0, (n + 1) * (n + 1)).prop_map(move |v| Tensor::new([n + 1, n + 1], v).unwrap())
}

/// A random score matrix, a valid K and a permutation of `1..=N`.
pub fn case() -> impl Strategy<Value = (Tensor<f64>, usize, Vec<usize>)> {
    (2usize..12).prop_flat_map(|n| (matrix(n), 1..=n, Just((1..=n).collect::<Vec<_>>()).prop_shuffle()))
}

/// `perm[j-1]` is the image of token `j`; the class token stays at 0.
pub fn permute(a: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let s = a.shape()[0];
    let map = |i: usize| if i == 0 { 0 } else { perm[i - 1] };
    let mut out = Tensor::<f64>::zeros([s, s]);
    for i in 0..s {
        for j in 0..s {
            out.data_mut()[map(i) * s + map(j)] = a.at(i, j);
        }
    }
    out
}

/// Adds `c_row` to all of row 0 and `c_col` to all of column 0.
pub fn shift(a: &Tensor<f64>, c_row: f64, c_col: f64) -> Tensor<f64> {
    let s = a.shape()[0];
    let mut out = a.clone();
    for j in 0..s {
        out.data_mut()[j] += c_row;
        out.data_mut()[j * s] += c_col;
    }
    out
}

pub fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
