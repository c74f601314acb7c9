//! Convolution of mixed measures.
//!
//! Two smooth pieces `f` on nodes `[a0, a1]` and `g` on `[b0, b1]` convolve
//! to a function that is smooth between the breakpoints
//! `{a0+b0, a0+b1, a1+b0, a1+b1}`. For output node `k` the integrand
//! `f(x) g(k-x)` lives on `[max(a0, k-b1), min(a1, k-b0)]`. When both ends of
//! that range coincide with piece ends and it is long enough, the product of
//! the two node-weight vectors integrates it exactly as the direct cell rule
//! would, so the bulk comes from one FFT of the weighted samples. The few
//! nodes near breakpoints are integrated directly.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::stencil::{self, END_ZONE};
use super::{same_step, Atom, DistError, MixedDistribution, Piece, MAX_NODES};

/// Minimum number of cells for the FFT path of a single output node.
const MIN_FFT_CELLS: usize = 2 * END_ZONE;

/// Convolution of two measures on the same grid.
///
/// Atoms must sit on grid nodes when they meet a density; two atoms give an
/// atom at the summed time.
pub fn convolve(
    a: &MixedDistribution,
    b: &MixedDistribution,
) -> Result<MixedDistribution, DistError> {
    same_step(a.step, b.step)?;
    let step = a.step;
    let needed = a.last_node() + b.last_node() + 1;
    if needed > MAX_NODES {
        return Err(DistError::GridOverflow {
            needed,
            limit: MAX_NODES,
        });
    }

    let mut pieces = Vec::new();
    for f in &a.pieces {
        for g in &b.pieces {
            pieces.extend(convolve_pieces(f, g, step));
        }
    }
    for (dens, atoms) in [(a, b), (b, a)] {
        for atom in &atoms.atoms {
            let shift = atoms.node_of(atom.time).ok_or(DistError::OffGridAtom {
                time: atom.time,
                step,
            })?;
            pieces.extend(
                dens.pieces
                    .iter()
                    .map(|p| p.shifted(shift, atom.mass, step)),
            );
        }
    }
    let mut atoms = Vec::new();
    for x in &a.atoms {
        for y in &b.atoms {
            atoms.push(Atom {
                time: x.time + y.time,
                mass: x.mass * y.mass,
            });
        }
    }
    Ok(MixedDistribution::from_parts(step, pieces, atoms))
}

fn convolve_pieces(f: &Piece, g: &Piece, step: f64) -> Vec<Piece> {
    let (a0, a1, b0, b1) = (f.start, f.end(), g.start, g.end());
    let (k0, k1) = (a0 + b0, a1 + b1);
    let wf = stencil::node_weights(a1 - a0);
    let wg = stencil::node_weights(b1 - b0);

    let fft_ok = f.values.len() > MIN_FFT_CELLS && g.values.len() > MIN_FFT_CELLS;
    let bulk = fft_ok.then(|| {
        let x: Vec<f64> = wf.iter().zip(&f.values).map(|(w, v)| w * v).collect();
        let y: Vec<f64> = wg.iter().zip(&g.values).map(|(w, v)| w * v).collect();
        fft_convolve(&x, &y)
    });

    let mut out = vec![0.0; k1 - k0 + 1];
    for (idx, slot) in out.iter_mut().enumerate() {
        let k = k0 + idx;
        let lo = a0.max(k.saturating_sub(b1));
        let hi = a1.min(k - b0);
        if hi <= lo {
            continue;
        }
        let r = hi - lo;
        let (ki, ei) = (k as i64, END_ZONE as i64);
        let clean = r >= MIN_FFT_CELLS
            && (a0 as i64 - (ki - b1 as i64)).abs() >= ei
            && (a1 as i64 - (ki - b0 as i64)).abs() >= ei;
        *slot = match &bulk {
            Some(bulk) if clean => step * bulk[idx],
            _ => step * direct(f, g, k, lo, r),
        };
    }

    let mut cuts = vec![k0, a0 + b1, a1 + b0, k1];
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| Piece::new(w[0], out[w[0] - k0..=w[1] - k0].to_vec(), step))
        .collect()
}

/// `sum_x w_x f(x) g(k - x)` over `x in [lo, lo + r]` with the cell rule.
fn direct(f: &Piece, g: &Piece, k: usize, lo: usize, r: usize) -> f64 {
    stencil::node_weights(r)
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let x = lo + j;
            w * f.values[x - f.start] * g.values[k - x - g.start]
        })
        .sum()
}

fn fft_convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = (x.len() + y.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // pack both real inputs into one complex transform
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(*x.get(i).unwrap_or(&0.0), *y.get(i).unwrap_or(&0.0)))
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = buf[k];
        let zc = buf[(n - k) % n].conj();
        let xk = (zk + zc) * 0.5;
        let yk = (zk - zc) * Complex::new(0.0, -0.5);
        prod[k] = xk * yk;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod.iter()
        .take(x.len() + y.len() - 1)
        .map(|c| c.re * scale)
        .collect()
}
