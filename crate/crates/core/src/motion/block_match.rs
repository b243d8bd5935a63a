use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tensor::{Real, Tensor};

use super::FlowField;

/// Full-search block matching by sum of absolute differences.
///
/// For each `block×block` tile of `current` (edge tiles are clipped), every
/// displacement `(u, v)` with `|u|, |v| ≤ range` that keeps the displaced
/// tile inside `reference` is scored. The winner minimizes SAD, then
/// `|u| + |v|`, then `v`, then `u`; that key is a total order, so the result
/// does not depend on scan order. The vector is replicated over the tile and
/// follows the backward-warp convention `current(x, y) ≈ reference(x + u, y + v)`.
pub fn block_match<T: Real>(
    reference: &Tensor<T>,
    current: &Tensor<T>,
    block: usize,
    range: usize,
) -> Result<FlowField> {
    block_match_with(reference, current, block, range, Exec::default())
}

pub fn block_match_with<T: Real>(
    reference: &Tensor<T>,
    current: &Tensor<T>,
    block: usize,
    range: usize,
    exec: Exec,
) -> Result<FlowField> {
    let (c, h, w) = reference.chw()?;
    current.expect_same_dims(reference, "block_match")?;
    if c != 1 {
        return Err(Error::shape(format!("block_match needs grayscale input, got {c} channels")));
    }
    if block < 4 || range < 1 {
        return Err(Error::Invalid(format!(
            "block size {block} must be ≥ 4 and search range {range} ≥ 1"
        )));
    }
    if h < block || w < block {
        return Err(Error::shape(format!("frame {w}×{h} is smaller than one {block}px block")));
    }
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let (refd, curd) = (reference.data(), current.data());
    let r = range as isize;

    let vectors = par::map_range(exec, bw * bh, |b| {
        let (x0, y0) = ((b % bw) * block, (b / bw) * block);
        let (x1, y1) = ((x0 + block).min(w), (y0 + block).min(h));
        let mut best: Option<(f64, isize, isize, isize)> = None;
        for v in -r..=r {
            for u in -r..=r {
                let (sx, sy) = (x0 as isize + u, y0 as isize + v);
                let (ex, ey) = (x1 as isize + u, y1 as isize + v);
                if sx < 0 || sy < 0 || ex > w as isize || ey > h as isize {
                    continue;
                }
                let mut sad = 0.0f64;
                for y in y0..y1 {
                    let ry = (y as isize + v) as usize;
                    let crow = &curd[y * w + x0..y * w + x1];
                    let rrow = &refd[ry * w + sx as usize..ry * w + ex as usize];
                    sad += crow
                        .iter()
                        .zip(rrow)
                        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
                        .sum::<f64>();
                }
                let key = (sad, u.abs() + v.abs(), v, u);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let (_, _, v, u) = best.expect("zero displacement is always admissible");
        (u as f32, v as f32)
    });

    let mut data = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = vectors[(y / block) * bw + x / block];
            data.push(u);
            data.push(v);
        }
    }
    FlowField::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Tensor<f32> {
        let mut rng = crate::nn::seeded_rng(seed);
        Tensor::from_fn(&[1, h, w], |_| rng.gen_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn identical_and_flat_frames_give_zero_flow() {
        let a = noise(32, 24, 3);
        let f = block_match(&a, &a, 8, 4).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let flat = Tensor::<f32>::full(&[1, 24, 32], 0.5).unwrap();
        let f = block_match(&flat, &flat, 8, 4).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_constructed_shift() {
        let (w, h) = (48, 40);
        let reference = noise(w, h, 9);
        let current = Tensor::from_fn(&[1, h, w], |i| {
            let (x, y) = (i % w, i / w);
            reference.at(&[0, y, (x + 3).min(w - 1)])
        })
        .unwrap();
        let f = block_match(&reference, &current, 8, 4).unwrap();
        for by in 0..h / 8 {
            for bx in 1..w / 8 - 1 {
                assert_eq!(f.at(bx * 8, by * 8), (3.0, 0.0), "block ({bx},{by})");
            }
        }
    }

    #[test]
    fn argument_validation() {
        let a = noise(16, 16, 1);
        assert!(block_match(&a, &a, 3, 2).is_err());
        assert!(block_match(&a, &a, 8, 0).is_err());
        let rgb = Tensor::<f32>::zeros(&[3, 16, 16]).unwrap();
        assert!(block_match(&rgb, &rgb, 8, 2).is_err());
        assert!(block_match(&a, &noise(16, 12, 1), 8, 2).is_err());
    }

    #[test]
    fn sequential_matches_parallel() {
        let a = noise(40, 32, 5);
        let b = noise(40, 32, 6);
        assert_eq!(
            block_match_with(&a, &b, 8, 3, Exec::Sequential).unwrap(),
            block_match_with(&a, &b, 8, 3, Exec::Parallel).unwrap()
        );
    }
}
