// SPDX-License-Identifier: Apache-2.0

use xbarlife::circuit::CrossbarConfig;
use xbarlife::grid::Grid;

/// Dense nodal system with wordline nodes first, then bitline nodes, solved by
/// Gaussian elimination with partial pivoting.
pub fn dense_oracle(cfg: &CrossbarConfig, states: &Grid, v: f64) -> Vec<Vec<f64>> {
    let (r, c) = (cfg.rows, cfg.cols);
    let n = 2 * r * c;
    let w = |i: usize, j: usize| i * c + j;
    let b = |i: usize, j: usize| r * c + i * c + j;
    let mut a = vec![vec![0.0; n + 1]; n];
    let gw = 1.0 / cfg.r_word_unit;
    let gb = 1.0 / cfg.r_bit_unit;
    let g_leak = cfg.g_leak_ref * 2f64.powf((cfg.t_ambient - 298.0) / cfg.leak_doubling_k);
    let link = |a: &mut Vec<Vec<f64>>, p: usize, q: usize, g: f64| {
        a[p][p] += g;
        a[q][q] += g;
        a[p][q] -= g;
        a[q][p] -= g;
    };
    for i in 0..r {
        for j in 0..c {
            if j == 0 {
                a[w(i, 0)][w(i, 0)] += gw;
                a[w(i, 0)][n] += gw * v;
            } else {
                link(&mut a, w(i, j - 1), w(i, j), gw);
            }
            if i == 0 {
                a[b(0, j)][b(0, j)] += gb;
            } else {
                link(&mut a, b(i - 1, j), b(i, j), gb);
            }
            let g = 1.0 / (states.get(i, j) + cfg.r_access_on) + g_leak;
            link(&mut a, w(i, j), b(i, j), g);
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let pivot_row = a[col].clone();
        for (row, line) in a.iter_mut().enumerate() {
            if row != col {
                let f = line[col] / pivot_row[col];
                for (x, p) in line[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let x: Vec<f64> = (0..n).map(|k| a[k][n] / a[k][k]).collect();
    (0..r)
        .map(|i| {
            (0..c)
                .map(|j| (x[w(i, j)] - x[b(i, j)]) / (states.get(i, j) + cfg.r_access_on))
                .collect()
        })
        .collect()
}
