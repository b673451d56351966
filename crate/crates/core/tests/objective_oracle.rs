//! Cross-checks the loss and metric implementations against brute-force
//! double-loop references, and the analytic gradient against central finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrain_core::cloud::dist2;
use terrain_core::dataset::{BevMaskSet, BevProjection};
use terrain_core::objective::{
    chamfer, loss, loss_with_grad, masked_chamfer, metric_cd_histogram, metric_cd_pt,
    spread_penalty, LossConfig, DEFAULT_HISTOGRAM_EDGES,
};

fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-half..half),
                rng.gen_range(-half..half),
                rng.gen_range(-half..half),
            ]
        })
        .collect()
}

/// Coordinates snapped to a coarse grid, to force exact distance ties.
fn gridlike_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-4i32..=4) as f64 * 0.5,
                rng.gen_range(-4i32..=4) as f64 * 0.5,
                rng.gen_range(-2i32..=2) as f64 * 0.5,
            ]
        })
        .collect()
}

/// Square mask spanning [-half, half] in x and y.
fn square_mask(half: f64) -> BevMaskSet {
    BevMaskSet::new(
        BevProjection {
            origin_xy: [-2.0 * half, -2.0 * half],
            meters_per_pixel: 0.1,
            width: (40.0 * half) as u32,
            height: (40.0 * half) as u32,
        },
        vec![vec![[-half, -half], [half, -half], [half, half], [-half, half]]],
    )
    .unwrap()
}

fn brute_nearest(q: [f64; 3], pts: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, &t) in pts.iter().enumerate() {
        let d2 = dist2(q, t);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

fn brute_chamfer(p: &[[f64; 3]], g: &[[f64; 3]]) -> f64 {
    let fwd: f64 = p.iter().map(|&q| brute_nearest(q, g).1).sum();
    let bwd: f64 = g.iter().map(|&q| brute_nearest(q, p).1).sum();
    fwd / p.len() as f64 + bwd / g.len() as f64
}

fn brute_cd_pt(p: &[[f64; 3]], g: &[[f64; 3]]) -> f64 {
    p.iter().map(|&q| brute_nearest(q, g).1).sum::<f64>() / p.len() as f64
}

fn brute_masked(p: &[[f64; 3]], y: &[[f64; 3]], masks: &BevMaskSet, cfg: &LossConfig) -> f64 {
    let fwd: f64 = p
        .iter()
        .map(|&q| {
            let w = if masks.contains_xy(q[0], q[1]) { 1.0 } else { cfg.delta };
            w * brute_nearest(q, y).1
        })
        .sum();
    let bwd: f64 = y.iter().map(|&q| brute_nearest(q, p).1).sum();
    cfg.alpha * fwd / p.len() as f64 + cfg.beta * bwd / y.len() as f64
}

fn brute_spread(p: &[[f64; 3]], cfg: &LossConfig) -> f64 {
    if cfg.spread_weight == 0.0 || p.len() < 2 || cfg.spread_k == 0 {
        return 0.0;
    }
    let k = cfg.spread_k.min(p.len() - 1);
    let mut total = 0.0;
    for (i, &q) in p.iter().enumerate() {
        let mut ds: Vec<(f64, usize)> = p
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &t)| (dist2(q, t), j))
            .collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(d2, _) in ds.iter().take(k) {
            total += (cfg.spread_margin - d2.sqrt()).max(0.0);
        }
    }
    cfg.spread_weight * total / (p.len() * k) as f64
}

fn brute_histogram(g: &[[f64; 3]], p: &[[f64; 3]], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0usize; edges.len() + 1];
    for &q in g {
        let d = brute_nearest(q, p).1;
        let bin = edges.iter().position(|&e| d < e).unwrap_or(edges.len());
        counts[bin] += 1;
    }
    let scale = 100.0 / g.len() as f64;
    counts.into_iter().map(|c| c as f64 * scale).collect()
}

fn assert_rel_close(a: f64, b: f64, tol: f64, what: &str) {
    let err = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    assert!(err <= tol, "{what}: {a} vs {b} (relative error {err:e})");
}

#[test]
fn chamfer_and_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5ec71e);
    for case in 0..120 {
        let np = rng.gen_range(1..=200);
        let ng = rng.gen_range(1..=200);
        let (p, g) = if case % 3 == 0 {
            (gridlike_points(&mut rng, np), gridlike_points(&mut rng, ng))
        } else {
            (random_points(&mut rng, np, 5.0), random_points(&mut rng, ng, 5.0))
        };

        let got = chamfer(&p, &g).unwrap();
        assert_rel_close(got.value, brute_chamfer(&p, &g), 1e-12, "chamfer value");
        for (i, nb) in got.forward.iter().enumerate() {
            let d = brute_nearest(p[i], &g).1;
            assert_eq!(nb.distance.to_bits(), d.to_bits(), "forward term {i} in case {case}");
        }
        for (j, nb) in got.backward.iter().enumerate() {
            let d = brute_nearest(g[j], &p).1;
            assert_eq!(nb.distance.to_bits(), d.to_bits(), "backward term {j} in case {case}");
        }

        assert_rel_close(
            metric_cd_pt(&p, &g).unwrap(),
            brute_cd_pt(&p, &g),
            1e-12,
            "cd_pt",
        );

        let h = metric_cd_histogram(&g, &p, &DEFAULT_HISTOGRAM_EDGES).unwrap();
        let want = brute_histogram(&g, &p, &DEFAULT_HISTOGRAM_EDGES);
        assert_eq!(h.percentages, want, "histogram in case {case}");
        assert!((h.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-6);
    }
}

#[test]
fn masked_chamfer_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3a5ced);
    let masks = square_mask(2.0);
    for _ in 0..110 {
        let np = rng.gen_range(1..=150);
        let p = random_points(&mut rng, np, 4.0);
        let ny = rng.gen_range(1..=150);
        let y = random_points(&mut rng, ny, 4.0);
        let cfg = LossConfig {
            delta: [1.0, 2.0, 5.0, 10.0][rng.gen_range(0..4)],
            alpha: rng.gen_range(0.1..3.0),
            beta: rng.gen_range(0.1..3.0),
            ..LossConfig::default()
        };
        let got = masked_chamfer(&p, &y, &masks, &cfg).unwrap();
        assert_rel_close(got.value, brute_masked(&p, &y, &masks, &cfg), 1e-12, "masked chamfer");
    }
}

#[test]
fn masked_chamfer_with_unit_delta_equals_chamfer() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x77aa11);
    let masks = square_mask(1.0);
    let cfg = LossConfig { delta: 1.0, alpha: 1.0, beta: 1.0, ..LossConfig::default() };
    for _ in 0..100 {
        let np = rng.gen_range(1..=120);
        let p = random_points(&mut rng, np, 3.0);
        let ny = rng.gen_range(1..=120);
        let y = random_points(&mut rng, ny, 3.0);
        let masked = masked_chamfer(&p, &y, &masks, &cfg).unwrap().value;
        let plain = chamfer(&p, &y).unwrap().value;
        assert_rel_close(masked, plain, 1e-12, "unit-delta equivalence");
    }
}

#[test]
fn masked_chamfer_nondecreasing_in_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let masks = square_mask(1.5);
    for _ in 0..40 {
        let np = rng.gen_range(2..=80);
        let p = random_points(&mut rng, np, 4.0);
        let ny = rng.gen_range(2..=80);
        let y = random_points(&mut rng, ny, 4.0);
        let mut last = f64::NEG_INFINITY;
        for delta in [1.0, 2.0, 5.0, 10.0] {
            let cfg = LossConfig { delta, ..LossConfig::default() };
            let v = masked_chamfer(&p, &y, &masks, &cfg).unwrap().value;
            assert!(v >= last - 1e-15, "delta {delta} decreased the value");
            last = v;
        }
    }
}

#[test]
fn spread_penalty_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5b7ead);
    for case in 0..100 {
        let n = rng.gen_range(2..=120);
        let p = if case % 4 == 0 {
            gridlike_points(&mut rng, n)
        } else {
            random_points(&mut rng, n, 1.0)
        };
        let cfg = LossConfig {
            spread_weight: rng.gen_range(0.1..2.0),
            spread_k: rng.gen_range(1..=6),
            spread_margin: rng.gen_range(0.1..0.8),
            ..LossConfig::default()
        };
        let got = spread_penalty(&p, &cfg).unwrap();
        assert_rel_close(got, brute_spread(&p, &cfg), 1e-12, "spread penalty");
    }
}

#[test]
fn value_identical_between_plain_and_gradient_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let masks = square_mask(1.5);
    for _ in 0..50 {
        let np = rng.gen_range(2..=60);
        let p = random_points(&mut rng, np, 3.0);
        let ny = rng.gen_range(2..=60);
        let y = random_points(&mut rng, ny, 3.0);
        let cfg = LossConfig { spread_weight: 0.5, ..LossConfig::default() };
        let plain = loss(&p, &y, &masks, &cfg).unwrap();
        let with_grad = loss_with_grad(&p, &y, &masks, &cfg).unwrap();
        assert_eq!(plain.to_bits(), with_grad.value.to_bits());
    }
}

#[test]
fn chamfer_invariant_under_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e12);
    let p = random_points(&mut rng, 83, 5.0);
    let g = random_points(&mut rng, 67, 5.0);
    let mut p2 = p.clone();
    let mut g2 = g.clone();
    p2.reverse();
    g2.swap(0, 33);
    let a = chamfer(&p, &g).unwrap().value;
    let b = chamfer(&p2, &g2).unwrap().value;
    assert_rel_close(a, b, 1e-12, "permutation invariance");
}

/// True when every nearest-neighbor assignment, mask boundary, and hinge
/// threshold in the loss is comfortably far from switching, so the loss is
/// smooth in an h-neighborhood of the configuration.
fn in_general_position(
    p: &[[f64; 3]],
    y: &[[f64; 3]],
    cfg: &LossConfig,
    mask_half: f64,
    gap: f64,
) -> bool {
    let two_smallest = |q: [f64; 3], pts: &[[f64; 3]], skip: Option<usize>| -> (f64, f64) {
        let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
        for (i, &t) in pts.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let d = dist2(q, t).sqrt();
            if d < a {
                b = a;
                a = d;
            } else if d < b {
                b = d;
            }
        }
        (a, b)
    };
    for (i, &q) in p.iter().enumerate() {
        let (d0, d1) = two_smallest(q, y, None);
        if d0 < gap || d1 - d0 < gap {
            return false;
        }
        // Mask membership must not flip under perturbation.
        if (q[0].abs() - mask_half).abs() < gap || (q[1].abs() - mask_half).abs() < gap {
            return false;
        }
        // Every other prediction must be clear of the hinge margin and the
        // neighbor-set cutoff must be unambiguous.
        if cfg.spread_weight > 0.0 {
            let mut ds: Vec<f64> = p
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &t)| dist2(q, t).sqrt())
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if ds.iter().any(|d| *d < gap || (d - cfg.spread_margin).abs() < gap) {
                return false;
            }
            let k = cfg.spread_k.min(p.len() - 1);
            if k < ds.len() && ds[k] - ds[k - 1] < gap {
                return false;
            }
        }
    }
    for &q in y {
        let (d0, d1) = two_smallest(q, p, None);
        if d0 < gap || d1 - d0 < gap {
            return false;
        }
    }
    true
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4ad);
    let mask_half = 1.5;
    let masks = square_mask(mask_half);
    let cfg = LossConfig {
        delta: 5.0,
        alpha: 1.0,
        beta: 1.0,
        spread_weight: 0.5,
        spread_k: 3,
        spread_margin: 0.6,
    };
    let h = 1e-4;
    let mut accepted = 0;
    for _ in 0..400 {
        if accepted >= 25 {
            break;
        }
        let np = rng.gen_range(4..=12);
        let p = random_points(&mut rng, np, 3.0);
        let ny = rng.gen_range(4..=12);
        let y = random_points(&mut rng, ny, 3.0);
        if !in_general_position(&p, &y, &cfg, mask_half, 5e-2) {
            continue;
        }
        accepted += 1;
        let analytic = loss_with_grad(&p, &y, &masks, &cfg).unwrap();
        for i in 0..p.len() {
            for a in 0..3 {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[i][a] += h;
                minus[i][a] -= h;
                let fd = (loss(&plus, &y, &masks, &cfg).unwrap()
                    - loss(&minus, &y, &masks, &cfg).unwrap())
                    / (2.0 * h);
                let got = analytic.d_pred[i][a];
                let err = (got - fd).abs() / got.abs().max(fd.abs()).max(1e-6);
                assert!(
                    err < 1e-3,
                    "gradient mismatch at prediction {i} axis {a}: analytic {got}, finite-difference {fd} (relative error {err:e})"
                );
            }
        }
    }
    assert!(accepted >= 20, "only {accepted} configurations accepted");
}

#[test]
fn gradient_descends_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd05e);
    let masks = square_mask(1.5);
    let cfg = LossConfig { spread_weight: 0.2, ..LossConfig::default() };
    let y = random_points(&mut rng, 40, 1.0);
    let mut p = random_points(&mut rng, 30, 3.0);
    let initial = loss(&p, &y, &masks, &cfg).unwrap();
    for _ in 0..300 {
        let lg = loss_with_grad(&p, &y, &masks, &cfg).unwrap();
        for (q, g) in p.iter_mut().zip(&lg.d_pred) {
            for a in 0..3 {
                q[a] -= 0.1 * g[a];
            }
        }
    }
    let finished = loss(&p, &y, &masks, &cfg).unwrap();
    assert!(
        finished < 0.25 * initial,
        "descent stalled: {initial} -> {finished}"
    );
}
