//! Bottom-up feature weighting and two-level pyramid fusion: each channel of a
//! feature map is squeezed to its global mean, passed through a small gating
//! convolution, and broadcast back as a multiplicative weight in (0,1), so
//! informative channels are emphasized and weak ones suppressed before the
//! two resolution levels are fused.

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_3x3, global_avg_pool, pointwise, resample, Activation, ConvParams, FeatureMap,
    PointwiseOp, ResampleMode,
};

/// Multiplicative weight map with the same shape as its source feature.
///
/// Under the default squeeze-to-one-scalar path the weights are spatially
/// constant per channel and, with the sigmoid gate, lie strictly in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightResponseMap(FeatureMap);

impl WeightResponseMap {
    pub fn map(&self) -> &FeatureMap {
        &self.0
    }

    pub fn into_map(self) -> FeatureMap {
        self.0
    }
}

/// Compute the weight response for `x`: global average pool each channel to a
/// (c,1,1) tensor, apply a 3x3 gating convolution with sigmoid activation, and
/// replicate the result back up to `x`'s spatial dims.
pub fn weight_response(x: &FeatureMap, p: &ConvParams) -> Result<WeightResponseMap> {
    if p.in_channels() != x.channels() || p.out_channels() != x.channels() {
        return Err(Error::config(format!(
            "gating conv is {}->{} channels but feature map has {}",
            p.in_channels(),
            p.out_channels(),
            x.channels()
        )));
    }
    let pooled = global_avg_pool(x);
    let squeezed = FeatureMap::from_vec(x.channels(), 1, 1, pooled)?;
    let gated = conv2d_3x3(&squeezed, p, Activation::Sigmoid)?;
    let up = resample(&gated, x.height(), x.width(), ResampleMode::NearestUp)?;
    Ok(WeightResponseMap(up))
}

/// Rescale `x` by its weight response, elementwise.
pub fn apply_weights(x: &FeatureMap, w: &WeightResponseMap) -> Result<FeatureMap> {
    pointwise(x, w.map(), PointwiseOp::Mul)
}

/// Fuse two weighted pyramid levels: the fine level (`fq`, `oj`, at twice the
/// coarse spatial dims) is summed and mean-pooled down, then added to the sum
/// of the coarse level (`fp`, `oi`). Output has the coarse shape.
pub fn pyramid_fuse(
    fp: &FeatureMap,
    oi: &FeatureMap,
    fq: &FeatureMap,
    oj: &FeatureMap,
) -> Result<FeatureMap> {
    if !fp.same_shape(oi) {
        return Err(Error::dim(format!(
            "coarse level shapes {:?} vs {:?}",
            fp.shape(),
            oi.shape()
        )));
    }
    if !fq.same_shape(oj) {
        return Err(Error::dim(format!(
            "fine level shapes {:?} vs {:?}",
            fq.shape(),
            oj.shape()
        )));
    }
    let (c, h, w) = fp.shape();
    if fq.shape() != (c, 2 * h, 2 * w) {
        return Err(Error::dim(format!(
            "fine level {:?} is not 2x the coarse level {:?}",
            fq.shape(),
            fp.shape()
        )));
    }
    let coarse = pointwise(fp, oi, PointwiseOp::Add)?;
    let fine = pointwise(fq, oj, PointwiseOp::Add)?;
    let fine_down = resample(&fine, h, w, ResampleMode::AvgDown2)?;
    pointwise(&coarse, &fine_down, PointwiseOp::Add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_map(rng: &mut ChaCha12Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-2.0..2.0))
    }

    fn random_params(rng: &mut ChaCha12Rng, c: usize) -> ConvParams {
        let weights = (0..c * c * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        ConvParams::from_parts(c, c, weights, bias).unwrap()
    }

    #[test]
    fn zero_input_zero_params_gives_half_weights() {
        let x = FeatureMap::new(3, 4, 4);
        let w = weight_response(&x, &ConvParams::zeros(3, 3)).unwrap();
        assert_eq!(w.map().shape(), (3, 4, 4));
        for &v in w.map().data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn identity_gate_passes_channel_means_through_sigmoid() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let x = random_map(&mut rng, 2, 4, 6);
        let w = weight_response(&x, &ConvParams::identity(2)).unwrap();
        let means = global_avg_pool(&x);
        for c in 0..2 {
            let expect = sigmoid(means[c]);
            for y in 0..4 {
                for xx in 0..6 {
                    assert!((w.map().get(c, y, xx) - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn weight_response_matches_step_by_step_composition() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        for _ in 0..10 {
            let x = random_map(&mut rng, 4, 6, 6);
            let p = random_params(&mut rng, 4);
            let got = weight_response(&x, &p).unwrap();
            // independent composition of the three substrate ops
            let squeezed = FeatureMap::from_vec(4, 1, 1, global_avg_pool(&x)).unwrap();
            let gated = conv2d_3x3(&squeezed, &p, Activation::Sigmoid).unwrap();
            let want = resample(&gated, 6, 6, ResampleMode::NearestUp).unwrap();
            for (g, w) in got.map().data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_lie_strictly_inside_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..10 {
            let x = random_map(&mut rng, 3, 5, 5);
            let p = random_params(&mut rng, 3);
            let w = weight_response(&x, &p).unwrap();
            for &v in w.map().data() {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn apply_weights_halves_with_constant_half_map() {
        let x = FeatureMap::from_fn(2, 3, 3, |c, y, _| (c + y) as f64 + 1.0);
        let w = WeightResponseMap(FeatureMap::from_fn(2, 3, 3, |_, _, _| 0.5));
        let y = apply_weights(&x, &w).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(*b, a * 0.5);
        }
    }

    #[test]
    fn apply_weights_shrinks_nonzero_magnitudes() {
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let x = random_map(&mut rng, 3, 4, 4);
        let p = random_params(&mut rng, 3);
        let w = weight_response(&x, &p).unwrap();
        let y = apply_weights(&x, &w).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            if *a != 0.0 {
                assert!(b.abs() > 0.0 && b.abs() < a.abs());
            } else {
                assert_eq!(*b, 0.0);
            }
        }
    }

    #[test]
    fn argmax_per_channel_is_preserved() {
        let mut rng = ChaCha12Rng::seed_from_u64(25);
        let x = random_map(&mut rng, 2, 5, 5);
        let p = random_params(&mut rng, 2);
        let y = apply_weights(&x, &weight_response(&x, &p).unwrap()).unwrap();
        for c in 0..2 {
            let arg = |m: &FeatureMap| {
                let plane = m.channel(c);
                plane
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            };
            assert_eq!(arg(&x), arg(&y));
        }
    }

    #[test]
    fn fuse_zero_inputs_gives_zero() {
        let z1 = FeatureMap::new(2, 3, 3);
        let z2 = FeatureMap::new(2, 6, 6);
        let out = pyramid_fuse(&z1, &z1, &z2, &z2).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_shape_contract() {
        let coarse = FeatureMap::new(8, 14, 14);
        let fine = FeatureMap::new(8, 28, 28);
        let out = pyramid_fuse(&coarse, &coarse, &fine, &fine).unwrap();
        assert_eq!(out.shape(), (8, 14, 14));
        // mismatched fine level rejected
        let bad = FeatureMap::new(8, 27, 28);
        assert!(pyramid_fuse(&coarse, &coarse, &bad, &bad).is_err());
    }

    #[test]
    fn fuse_constants_sum() {
        let mk = |c: usize, h: usize, w: usize, v: f64| FeatureMap::from_fn(c, h, w, |_, _, _| v);
        let out = pyramid_fuse(
            &mk(2, 4, 4, 1.5),
            &mk(2, 4, 4, -0.5),
            &mk(2, 8, 8, 2.0),
            &mk(2, 8, 8, 0.25),
        )
        .unwrap();
        for &v in out.data() {
            assert!((v - (1.5 - 0.5 + 2.0 + 0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_is_linear_in_its_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(26);
        let fp = random_map(&mut rng, 2, 4, 4);
        let oi = random_map(&mut rng, 2, 4, 4);
        let fq = random_map(&mut rng, 2, 8, 8);
        let oj = random_map(&mut rng, 2, 8, 8);
        let alpha = 0.375;
        let base = pyramid_fuse(&fp, &oi, &fq, &oj).unwrap();
        let scaled = pyramid_fuse(
            &fp.map(|v| alpha * v),
            &oi.map(|v| alpha * v),
            &fq.map(|v| alpha * v),
            &oj.map(|v| alpha * v),
        )
        .unwrap();
        for (s, b) in scaled.data().iter().zip(base.data()) {
            assert!((s - alpha * b).abs() < 1e-12);
        }
    }
}
