//! Analytic derivatives against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realdepth_core::imaging::{
    bilinear_sample, bilinear_sample_backward, downsample2x, downsample2x_adjoint, sobel_adjoint, sobel_gradients,
    ssim_map, ssim_map_backward,
};
use realdepth_core::objective::Term;
use realdepth_core::optim::{finite_diff_check, optimize_from, OptimConfig};
use realdepth_core::{Image, LossWeights, ProjectionMap, ScalarGrid, SceneDescriptor};

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Image {
    Image::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap()
}

/// Coordinate at least 1e-3 away from every lattice line.
fn off_lattice(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    loop {
        let x: f64 = rng.random_range(0.0..max);
        let frac = x - x.floor();
        if frac > 1e-3 && frac < 1.0 - 1e-3 {
            return x;
        }
    }
}

#[test]
fn bilinear_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (h, w, c) = (6, 7, 3);
    let src = random_image(&mut rng, h, w, c);
    let (oh, ow) = (4, 5);
    let u: Vec<f64> = (0..oh * ow).map(|_| off_lattice(&mut rng, (w - 1) as f64)).collect();
    let v: Vec<f64> = (0..oh * ow).map(|_| off_lattice(&mut rng, (h - 1) as f64)).collect();
    let weights: Vec<f64> = (0..oh * ow * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |img: &Image, u: &[f64], v: &[f64]| -> f64 {
        let coords = ProjectionMap::from_coords(oh, ow, u.to_vec(), v.to_vec()).unwrap();
        let (out, _) = bilinear_sample(img, &coords).unwrap();
        out.as_slice().iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    let coords = ProjectionMap::from_coords(oh, ow, u.clone(), v.clone()).unwrap();
    let grad = bilinear_sample_backward(&src, &coords, &weights).unwrap();
    let step = 1e-5;
    for i in 0..oh * ow {
        for (which, analytic) in [(0, grad.du[i]), (1, grad.dv[i])] {
            let (mut up, mut down) = ((u.clone(), v.clone()), (u.clone(), v.clone()));
            if which == 0 {
                up.0[i] += step;
                down.0[i] -= step;
            } else {
                up.1[i] += step;
                down.1[i] -= step;
            }
            let numeric = (objective(&src, &up.0, &up.1) - objective(&src, &down.0, &down.1)) / (2.0 * step);
            assert!(rel_err(analytic, numeric, 1e-9) < 1e-6, "coord {which} pixel {i}: {analytic} vs {numeric}");
        }
    }
    for j in 0..src.as_slice().len() {
        let shifted = |d: f64| {
            let mut vals = src.as_slice().to_vec();
            vals[j] += d;
            Image::new(h, w, c, vals.iter().map(|x| x.clamp(0.0, 1.0)).collect()).unwrap()
        };
        let numeric = (objective(&shifted(step), &u, &v) - objective(&shifted(-step), &u, &v)) / (2.0 * step);
        assert!(rel_err(grad.source[j], numeric, 1e-9) < 1e-6, "source entry {j}");
    }
}

#[test]
fn sobel_adjoint_satisfies_inner_product_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (5, 8);
    let x = ScalarGrid::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let gx: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gy: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (sx, sy) = sobel_gradients(&x).unwrap();
    let lhs: f64 = sx.as_slice().iter().zip(&gx).chain(sy.as_slice().iter().zip(&gy)).map(|(a, b)| a * b).sum();
    let back = sobel_adjoint(h, w, &gx, &gy).unwrap();
    let rhs: f64 = x.as_slice().iter().zip(&back).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn downsample_adjoint_satisfies_inner_product_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = ScalarGrid::from_fn(6, 8, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lhs: f64 = downsample2x(&x).unwrap().as_slice().iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.as_slice().iter().zip(downsample2x_adjoint(&y, 3, 4)).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-14);
}

#[test]
fn ssim_backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w, c) = (5, 6, 3);
    let a = random_image(&mut rng, h, w, c);
    let b = random_image(&mut rng, h, w, c);
    let g: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |img: &Image| -> f64 { ssim_map(&a, img).unwrap().as_slice().iter().zip(&g).map(|(s, k)| s * k).sum() };
    let analytic = ssim_map_backward(&a, &b, &g).unwrap();
    let step = 1e-5;
    for j in 0..b.as_slice().len() {
        let shifted = |d: f64| {
            let mut vals = b.as_slice().to_vec();
            vals[j] += d;
            Image::new(h, w, c, vals).unwrap()
        };
        let numeric = (objective(&shifted(step)) - objective(&shifted(-step))) / (2.0 * step);
        assert!(rel_err(analytic[j], numeric, 1e-6) < 1e-6, "entry {j}: {} vs {numeric}", analytic[j]);
    }
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> ScalarGrid {
    ScalarGrid::from_fn(n, n, |_, _| rng.random_range(-amplitude..amplitude)).unwrap()
}

#[test]
fn total_gradient_matches_central_differences_on_16x16() {
    let pair = SceneDescriptor::slanted_reference(16).build().unwrap().render().unwrap().scene_pair().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fields = [random_field(&mut rng, 16, 0.2), random_field(&mut rng, 16, 0.2)];
    let weights = LossWeights::default().with_scales(3);
    let report = finite_diff_check(&pair, [&fields[0], &fields[1]], &weights, 1e-4, 512, 0).unwrap();
    assert_eq!(report.entries.len(), 512);
    assert!(report.pass_fraction(1e-5) >= 0.99, "{}", report.summary(1e-5));
    // Every term separately. A stencil may still cross an |·| kink of the
    // photometric, consistency or smoothness terms, so the same 99% bar applies.
    let z = LossWeights::zero().with_scales(3);
    for w in [
        LossWeights { lambda_ph: 1.0, ..z },
        LossWeights { lambda_gc: 1.0, ..z },
        LossWeights { lambda_ssim: 1.0, ..z },
        LossWeights { lambda_smooth_base: 1.0, ..z },
    ] {
        let r = finite_diff_check(&pair, [&fields[0], &fields[1]], &w, 1e-4, 256, 2).unwrap();
        assert!(r.pass_fraction(1e-5) >= 0.99, "{w:?}\n{}", r.summary(1e-5));
    }
}

#[test]
fn ground_truth_initialization_is_near_stationary() {
    let scene = SceneDescriptor::slanted_reference(64).build().unwrap().render().unwrap();
    let pair = scene.scene_pair().unwrap();
    let mu = pair.medians();
    let init = [0, 1].map(|k| scene.depths[k].map(|d| (d / mu[k].value()).ln()).unwrap());
    let config = OptimConfig { max_iterations: 10, initial_lr: 1e-4, record_every: 1, ..OptimConfig::default() };
    let out = optimize_from(&pair, &config, init).unwrap();
    let totals: Vec<f64> = out.trajectory.records.iter().map(|r| r.breakdown.total).collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{totals:?}");
    let ph = |i: usize| out.trajectory.records[i].breakdown.term(Term::Photometric);
    assert!(ph(10) < ph(0) + 1e-9);
}
