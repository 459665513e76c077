//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ic_core::bt::{bt_fit, log_likelihood, BtOptions, PairwiseTally};
use ic_core::edits::{
    apply_edit_sequence, apply_exposure, apply_white_balance, edit_objective, fit_edit_params, sample_random_edits,
    EditFitOptions, EditKind, EditOrder, EditParams, EditSet, COLOR_CURVE_RANGE, EXPOSURE_RANGE, SATURATION_RANGE,
    WHITE_BALANCE_RANGE,
};
use ic_core::intrinsic::{composite, linear_to_srgb, reconstruct, srgb_to_linear};
use ic_core::io::write_scene;
use ic_core::lighting::{
    fit_light_constrained, fit_light_lstsq, light_objective, render_lambertian, FitOptions, LightModel, NormalMap,
};
use ic_core::raster::{AlphaMask, Image};
use ic_core::reshade::{generate_pair, harmonize, loss_mse, loss_multiscale_gradient, loss_total, loss_total_gradient};
use ic_core::synthetic;
use ic_core::IdentityRefiner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tower::ServiceExt;

type Check = Result<(), String>;
type Invocation<'a> = Box<dyn Fn(&Path) -> Result<Vec<u8>, String> + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Image<f64> {
    Image::from_fn(h, w, c, |_, _, _| rng.random_range(lo..hi))
}

fn params(l: &LightModel<f64>) -> [f64; 4] {
    [l.direction[0], l.direction[1], l.direction[2], l.ambient]
}

fn l2(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------------------
// 1. Light-fit recovery

fn random_feasible_light(rng: &mut ChaCha8Rng, normals: &NormalMap<f64>) -> LightModel<f64> {
    loop {
        let l = LightModel::new(
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..1.0),
            ],
            rng.random_range(0.0..=2.0),
        )
        .unwrap();
        // Stay in the linear regime: the generator must not clamp any pixel.
        if normals.data().iter().all(|n| l.linear_response(*n) > 1e-3) {
            return l;
        }
    }
}

fn with_noise(rng: &mut ChaCha8Rng, shading: &Image<f64>, level: f64) -> Image<f64> {
    let data = shading
        .data()
        .iter()
        .map(|s| {
            let z: f64 = StandardNormal.sample(rng);
            (s * (1.0 + level * z)).max(0.0)
        })
        .collect();
    Image::new(shading.height(), shading.width(), 1, data).unwrap()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let opts = FitOptions::default();
    let mut worst = [0.0f64; 4];
    for scene in 0..100u64 {
        let mut r = rng(1000 + scene);
        let normals = synthetic::hemisphere_normals::<f64>(32, 32, scene);
        let truth = random_feasible_light(&mut r, &normals);
        let clean = render_lambertian(&normals, &truth);
        let noisy = with_noise(&mut r, &clean, 0.01);
        let fits = [
            fit_light_constrained(&normals, &clean, None, &opts),
            fit_light_lstsq(&normals, &clean, None, &opts),
            fit_light_constrained(&normals, &noisy, None, &opts),
            fit_light_lstsq(&normals, &noisy, None, &opts),
        ];
        for (k, fit) in fits.into_iter().enumerate() {
            let fit = fit.map_err(|e| format!("scene {scene}: {e}"))?;
            let err = l2(params(&fit.light), params(&truth));
            worst[k] = worst[k].max(err);
            let limit = if k < 2 { 1e-3 } else { 5e-2 };
            ensure(err < limit, || {
                format!(
                    "scene {scene} solver {k}: L2 error {err:.3e} >= {limit:e} (truth {truth:?}, fit {:?})",
                    fit.light
                )
            })?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, || format!("suite took {elapsed:.1}s"))?;
    println!(
        "    worst L2: constrained {:.1e}, lstsq {:.1e} (noiseless); {:.1e}, {:.1e} (1% noise); {elapsed:.2}s",
        worst[0], worst[1], worst[2], worst[3]
    );
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 2. Solver cross-check

/// Solves the plain normal equations by Gaussian elimination with partial pivoting.
fn normal_equations(normals: &NormalMap<f64>, shading: &Image<f64>) -> [f64; 4] {
    let mut a = [[0.0; 5]; 4];
    for (n, s) in normals.data().iter().zip(shading.data()) {
        let row = [n[0], n[1], n[2], 1.0];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += row[r] * row[c];
            }
            a[r][4] += row[r] * s;
        }
    }
    for col in 0..4 {
        let p = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, p);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..5 {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        x[r] = (a[r][4] - (r + 1..4).map(|c| a[r][c] * x[c]).sum::<f64>()) / a[r][r];
    }
    x
}

fn criterion_2() -> Check {
    let opts = FitOptions::default();
    let mut r = rng(2);
    let mut feasible = 0;
    let mut attempts = 0;
    let mut worst: f64 = 0.0;
    while feasible < 50 {
        attempts += 1;
        ensure(attempts < 2000, || {
            format!("only {feasible} feasible cases in {attempts} draws")
        })?;
        let normals = synthetic::hemisphere_normals::<f64>(24, 24, 5000 + attempts);
        let truth = LightModel::new(
            [
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-0.3..1.0),
            ],
            r.random_range(-0.3..1.5),
        )
        .unwrap();
        let shading = with_noise(&mut r, &render_lambertian(&normals, &truth), 0.02);
        let free = fit_light_lstsq(&normals, &shading, None, &opts).map_err(|e| e.to_string())?;
        let oracle = normal_equations(&normals, &shading);
        let oracle_err = l2(params(&free.light), oracle);
        ensure(oracle_err < 1e-4, || {
            format!("lstsq differs from unregularized normal equations by {oracle_err:.2e}")
        })?;
        if free.light.direction[2] < 0.0 || free.light.ambient < 0.0 {
            continue;
        }
        feasible += 1;
        let constrained = fit_light_constrained(&normals, &shading, None, &opts).map_err(|e| e.to_string())?;
        let d = l2(params(&constrained.light), params(&free.light));
        worst = worst.max(d);
        ensure(d < 1e-4, || format!("case {attempts}: solvers differ by {d:.2e}"))?;
    }
    println!("    {feasible} feasible cases of {attempts}; worst disagreement {worst:.1e}");
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 3. Compositing algebra

fn criterion_3() -> Check {
    let mut r = rng(3);
    for case in 0..25 {
        let (h, w) = (r.random_range(2..10), r.random_range(2..10));
        let fa = random_image(&mut r, h, w, 3, 0.0, 1.0);
        let ba = random_image(&mut r, h, w, 3, 0.0, 1.0);
        let fs = random_image(&mut r, h, w, 1, 0.0, 2.0);
        let bs = random_image(&mut r, h, w, 1, 0.0, 2.0);
        let alpha = AlphaMask::from_fn(h, w, |_, _| r.random::<f64>());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;

        let ones = AlphaMask::filled(h, w, 1.0);
        let zeros = AlphaMask::filled(h, w, 0.0);
        let all_fg = composite(&fa, &ba, &ones).unwrap();
        let all_bg = composite(&fa, &ba, &zeros).unwrap();
        ensure(all_fg.data().iter().zip(fa.data()).all(|(a, b)| close(*a, *b)), || {
            format!("case {case}: alpha=1")
        })?;
        ensure(all_bg.data().iter().zip(ba.data()).all(|(a, b)| close(*a, *b)), || {
            format!("case {case}: alpha=0")
        })?;

        let unit = Image::filled(h, w, 1, 1.0);
        let same = reconstruct(&fa, &unit).unwrap();
        ensure(same.data().iter().zip(fa.data()).all(|(a, b)| close(*a, *b)), || {
            format!("case {case}: S=1")
        })?;

        // I = (αSf + (1-α)Sb) · (αAf + (1-α)Ab), brute force per sample.
        let ac = composite(&fa, &ba, &alpha).unwrap();
        let sc = composite(&fs, &bs, &alpha).unwrap();
        let img = reconstruct(&ac, &sc).unwrap();
        for y in 0..h {
            for x in 0..w {
                let a = alpha.get(y, x);
                let s = a * fs.get(y, x, 0) + (1.0 - a) * bs.get(y, x, 0);
                for k in 0..3 {
                    let alb = a * fa.get(y, x, k) + (1.0 - a) * ba.get(y, x, k);
                    ensure(close(ac.get(y, x, k), alb), || format!("case {case}: albedo composite"))?;
                    ensure(close(img.get(y, x, k), s * alb), || {
                        format!("case {case}: reconstruction")
                    })?;
                }
                ensure(close(sc.get(y, x, 0), s), || format!("case {case}: shading composite"))?;
            }
        }

        let lin = srgb_to_linear(&fa, 2.2).unwrap();
        let back = linear_to_srgb(&lin, 2.2).unwrap();
        for ((v, l), b) in fa.data().iter().zip(lin.data()).zip(back.data()) {
            ensure(close(*l, v.powf(2.2)), || format!("case {case}: decode {v}"))?;
            ensure(close(*b, *v), || format!("case {case}: gamma round trip {v} -> {b}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 4. Loss suite

fn px(img: &Image<f64>, y: usize, x: usize, k: usize) -> f64 {
    img.data()[(y * img.width() + x) * img.channels() + k]
}

fn oracle_mse(a: &Image<f64>, b: &Image<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        s += (x - y) * (x - y);
    }
    s / a.data().len() as f64
}

fn oracle_half(img: &Image<f64>) -> Image<f64> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; nh * nw * c];
    for y in 0..nh {
        for x in 0..nw {
            for k in 0..c {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += px(img, (2 * y + dy).min(h - 1), (2 * x + dx).min(w - 1), k);
                    }
                }
                out[(y * nw + x) * c + k] = s / 4.0;
            }
        }
    }
    Image::signed(nh, nw, c, out).unwrap()
}

fn oracle_gradient_loss(p: &Image<f64>, g: &Image<f64>, scales: usize) -> f64 {
    let (mut p, mut g) = (p.clone(), g.clone());
    let mut total = 0.0;
    for level in 0..scales {
        if level > 0 {
            p = oracle_half(&p);
            g = oracle_half(&g);
        }
        let (h, w, c) = (p.height(), p.width(), p.channels());
        let mut sq = 0.0;
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    let dx = |i: &Image<f64>| {
                        if x + 1 < w {
                            px(i, y, x + 1, k) - px(i, y, x, k)
                        } else {
                            0.0
                        }
                    };
                    let dy = |i: &Image<f64>| {
                        if y + 1 < h {
                            px(i, y + 1, x, k) - px(i, y, x, k)
                        } else {
                            0.0
                        }
                    };
                    sq += (dx(&p) - dx(&g)).powi(2) + (dy(&p) - dy(&g)).powi(2);
                }
            }
        }
        total += sq / (2 * h * w * c) as f64;
    }
    total
}

fn times(albedo: &Image<f64>, shading: &Image<f64>) -> Image<f64> {
    Image::from_fn(albedo.height(), albedo.width(), 3, |y, x, k| {
        px(albedo, y, x, k) * px(shading, y, x, 0)
    })
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
    diff / scale
}

fn criterion_4() -> Check {
    let mut r = rng(4);
    let mut worst = [0.0f64; 3];
    for case in 0..10 {
        let pred = random_image(&mut r, 8, 8, 1, 0.1, 1.5);
        let gt = random_image(&mut r, 8, 8, 1, 0.1, 1.5);
        let albedo = random_image(&mut r, 8, 8, 3, 0.1, 0.9);
        let rgb_a = random_image(&mut r, 8, 8, 3, 0.0, 1.0);
        let rgb_b = random_image(&mut r, 8, 8, 3, 0.0, 1.0);

        let tol = |got: f64, want: f64, what: &str| {
            ensure((got - want).abs() <= 1e-9, || {
                format!("case {case}: {what} {got} vs oracle {want}")
            })
        };
        tol(loss_mse(&pred, &gt).unwrap(), oracle_mse(&pred, &gt), "MSE")?;
        tol(
            loss_multiscale_gradient(&pred, &gt, 4).unwrap(),
            oracle_gradient_loss(&pred, &gt, 4),
            "gradient loss",
        )?;
        tol(
            loss_multiscale_gradient(&rgb_a, &rgb_b, 4).unwrap(),
            oracle_gradient_loss(&rgb_a, &rgb_b, 4),
            "RGB gradient loss",
        )?;
        let parts = loss_total(&pred, &gt, &albedo, 4).unwrap();
        let (pi, gi) = (times(&albedo, &pred), times(&albedo, &gt));
        let want = oracle_mse(&pred, &gt)
            + oracle_mse(&pi, &gi)
            + oracle_gradient_loss(&pred, &gt, 4)
            + oracle_gradient_loss(&pi, &gi, 4);
        tol(parts.total(), want, "total loss")?;

        // Loss gradient with respect to the predicted shading.
        let (_, grad) = loss_total_gradient(&pred, &gt, &albedo, 4).unwrap();
        let f = |v: &[f64]| {
            let p = Image::signed(8, 8, 1, v.to_vec()).unwrap();
            let (pi, gi) = (times(&albedo, &p), times(&albedo, &gt));
            oracle_mse(&p, &gt)
                + oracle_mse(&pi, &gi)
                + oracle_gradient_loss(&p, &gt, 4)
                + oracle_gradient_loss(&pi, &gi, 4)
        };
        let e = rel_err(grad.data(), &central_difference(f, pred.data(), 1e-6));
        worst[0] = worst[0].max(e);
        ensure(e < 1e-4, || {
            format!("case {case}: loss gradient relative error {e:.2e}")
        })?;

        // Light objective gradient.
        let normals = synthetic::hemisphere_normals::<f64>(8, 8, 40 + case);
        let shading = random_image(&mut r, 8, 8, 1, 0.0, 1.5);
        let theta: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = light_objective(&normals, &shading, &theta);
        let f = |v: &[f64]| {
            normals
                .data()
                .iter()
                .zip(shading.data())
                .map(|(n, s)| (n[0] * v[0] + n[1] * v[1] + n[2] * v[2] + v[3] - s).powi(2))
                .sum::<f64>()
                / 64.0
        };
        let e = rel_err(&g, &central_difference(f, &theta, 1e-6));
        worst[1] = worst[1].max(e);
        ensure(e < 1e-4, || {
            format!("case {case}: light gradient relative error {e:.2e}")
        })?;

        // Edit objective gradient.
        let fg = random_image(&mut r, 8, 8, 3, 0.2, 0.8);
        let target = random_image(&mut r, 8, 8, 3, 0.2, 0.8);
        let mask = AlphaMask::from_fn(8, 8, |_, _| r.random::<f64>());
        let order = EditOrder::all()[r.random_range(0..24)];
        let p = EditParams {
            white_balance: [
                r.random_range(0.3..0.9),
                r.random_range(0.3..0.9),
                r.random_range(0.3..0.9),
            ],
            saturation: r.random_range(0.5..1.5),
            color_curve: [
                r.random_range(0.5..1.5),
                r.random_range(0.5..1.5),
                r.random_range(0.5..1.5),
            ],
            exposure: r.random_range(0.6..1.2),
            order,
        };
        let (_, g) = edit_objective(&fg, &target, &mask, &p, EditSet::ALL).unwrap();
        let f = |v: &[f64]| {
            let q = EditParams::from_vector(v, order);
            let edited = apply_edit_sequence(&fg, &mask, &q, EditSet::ALL).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    let a = mask.get(y, x);
                    den += 3.0 * a;
                    for k in 0..3 {
                        num += a * (px(&edited, y, x, k) - px(&target, y, x, k)).powi(2);
                    }
                }
            }
            num / den
        };
        let e = rel_err(&g, &central_difference(f, &p.to_vector(), 1e-6));
        worst[2] = worst[2].max(e);
        ensure(e < 1e-4, || {
            format!("case {case}: edit gradient relative error {e:.2e}")
        })?;
    }
    println!(
        "    worst gradient relative error: loss {:.1e}, light {:.1e}, edits {:.1e}",
        worst[0], worst[1], worst[2]
    );
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 5. Edit operations

fn criterion_5() -> Check {
    let mut r = rng(5);
    let a = random_image(&mut r, 6, 7, 3, 0.0, 1.0);
    let mask = AlphaMask::filled(6, 7, 1.0);
    let max_diff = |x: &Image<f64>, y: &Image<f64>| {
        x.data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };

    for order in EditOrder::all() {
        let out = apply_edit_sequence(&a, &mask, &EditParams::identity(order), EditSet::ALL).unwrap();
        ensure(max_diff(&out, &a) < 1e-12, || {
            format!("identity parameters change the image ({order})")
        })?;
    }

    let round = apply_exposure(&apply_exposure(&a, 0.5).unwrap(), 2.0).unwrap();
    ensure(max_diff(&round, &a) < 1e-7, || {
        "exposure 0.5 then 2 is not the identity".into()
    })?;
    for _ in 0..20 {
        let g: f64 = r.random_range(0.5..=1.0);
        let round = apply_exposure(&apply_white_balance(&a, [g; 3]).unwrap(), 1.0 / g).unwrap();
        ensure(max_diff(&round, &a) < 1e-7, || {
            format!("white balance {g} then exposure {} is not the identity", 1.0 / g)
        })?;
        let g1: [f64; 3] = std::array::from_fn(|_| r.random_range(0.32..=1.0));
        let g2: [f64; 3] = std::array::from_fn(|_| r.random_range(0.32..=1.0));
        let twice = apply_white_balance(&apply_white_balance(&a, g1).unwrap(), g2).unwrap();
        let once = apply_white_balance(&a, std::array::from_fn(|k| g1[k] * g2[k])).unwrap();
        ensure(max_diff(&twice, &once) < 1e-12, || {
            "white balance does not compose productwise".into()
        })?;
    }

    let draws = 10_000u64;
    let mut counts = [0u64; 5];
    let mut orders = BTreeMap::new();
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    for seed in 0..draws {
        let (p, active) = sample_random_edits::<f64>(seed);
        counts[active.len()] += 1;
        *orders.entry(p.order.to_string()).or_insert(0u64) += 1;
        let ok = p.white_balance.iter().all(|v| inside(*v, WHITE_BALANCE_RANGE))
            && inside(p.saturation, SATURATION_RANGE)
            && p.color_curve.iter().all(|v| inside(*v, COLOR_CURVE_RANGE))
            && inside(p.exposure, EXPOSURE_RANGE);
        ensure(ok, || {
            format!("seed {seed}: sampled parameters outside their ranges: {p:?}")
        })?;
    }
    ensure(counts[0] == 0, || "a draw with no active edit".into())?;
    for (k, c) in counts.iter().enumerate().skip(1) {
        let freq = *c as f64 / draws as f64;
        ensure((freq - 0.25).abs() <= 0.02, || {
            format!("active count {k} has frequency {freq}")
        })?;
    }
    ensure(orders.len() == 24, || {
        format!("only {} of 24 orders drawn", orders.len())
    })?;
    ensure(sample_random_edits::<f64>(7) == sample_random_edits::<f64>(7), || {
        "sampler not deterministic".into()
    })?;

    let fg = Image::from_fn(12, 12, 3, |y, x, k| 0.15 + 0.04 * ((y + 2 * x + 3 * k) % 12) as f64);
    let fmask = AlphaMask::from_fn(12, 12, |y, x| {
        if (2..10).contains(&y) && (2..10).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    let active = EditSet::only(EditKind::Exposure);
    let truth = EditParams {
        exposure: 1.5,
        ..EditParams::identity(EditOrder::default())
    };
    let target = apply_edit_sequence(&fg, &fmask, &truth, active).unwrap();
    let opts = EditFitOptions {
        active,
        ..EditFitOptions::default()
    };
    let fit = fit_edit_params(&fg, &target, &fmask, EditOrder::default(), &opts).map_err(|e| e.to_string())?;
    let err = (fit.params.exposure - 1.5).abs();
    ensure(err < 0.02, || {
        format!("recovered exposure {} (error {err})", fit.params.exposure)
    })?;
    println!(
        "    active-count frequencies {:?}; recovered exposure {:.4}",
        &counts[1..],
        fit.params.exposure
    );
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 6. Pair generation

fn criterion_6() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..8 {
        let e = synthetic::lambertian_entry::<f64>(32, seed);
        let pair = generate_pair(
            &e.image,
            &e.mask,
            &e.albedo,
            &e.shading,
            &e.normals,
            &e.depth,
            &FitOptions::default(),
        )
        .map_err(|err| format!("entry {seed}: {err}"))?;
        let input = pair.input.shading();
        let mse = oracle_mse(&input, &e.shading);
        worst = worst.max(mse);
        ensure(mse < 1e-4, || format!("entry {seed}: shading MSE {mse:.2e}"))?;
        let rgb = pair.input.rgb();
        let gt_rgb = reconstruct(&e.albedo, &e.shading).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if e.mask.get(y, x) != 0.0 {
                    continue;
                }
                ensure(input.get(y, x, 0).to_bits() == e.shading.get(y, x, 0).to_bits(), || {
                    format!("entry {seed}: unmasked shading differs at ({y}, {x})")
                })?;
                for k in 0..3 {
                    ensure(rgb.get(y, x, k).to_bits() == gt_rgb.get(y, x, k).to_bits(), || {
                        format!("entry {seed}: unmasked RGB differs at ({y}, {x})")
                    })?;
                }
            }
        }
    }
    println!("    worst input-vs-gt shading MSE {worst:.1e}");
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 7. End-to-end self-composite

fn criterion_7() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..6 {
        let amplitude = if seed % 2 == 0 { 0.0 } else { 0.03 };
        let scene = synthetic::textured_self_composite_scene::<f64>(48, seed, amplitude);
        let out = harmonize(&scene, &IdentityRefiner, &Default::default()).map_err(|e| e.to_string())?;
        let num: f64 = out
            .composite
            .data()
            .iter()
            .zip(scene.bg_image.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let den: f64 = scene.bg_image.data().iter().map(|v| v.abs()).sum();
        let err = num / den;
        worst = worst.max(err);
        ensure(err < 0.05, || format!("scene {seed}: mean relative error {err:.4}"))?;
    }
    println!("    worst mean relative error {:.2}%", worst * 100.0);
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 8. Bradley-Terry

fn tally(names: &[&str], wins: Vec<Vec<u64>>) -> PairwiseTally {
    PairwiseTally::from_matrix(names.iter().map(|s| s.to_string()).collect(), wins).unwrap()
}

fn criterion_8() -> Check {
    let opts = BtOptions::<f64>::default();
    for (a, b) in [(3u64, 1u64), (7, 2), (1, 4)] {
        let s = bt_fit(&tally(&["x", "y"], vec![vec![0, a], vec![b, 0]]), &opts).map_err(|e| e.to_string())?;
        let want = a as f64 / (a + b) as f64;
        ensure(
            (s.scores[0] - want).abs() < 1e-9 && (s.scores[1] - (1.0 - want)).abs() < 1e-9,
            || format!("{a}:{b} gave {:?}, closed form {want}", s.scores),
        )?;
    }

    let sym = tally(
        &["a", "b", "c", "d"],
        (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0 } else { 6 }).collect())
            .collect(),
    );
    let s = bt_fit(&sym, &opts).map_err(|e| e.to_string())?;
    ensure(s.scores.iter().all(|v| (v - 0.25).abs() < 1e-9), || {
        format!("symmetric counts gave {:?}", s.scores)
    })?;

    let mut r = rng(8);
    let names = ["m0", "m1", "m2", "m3", "m4"];
    for case in 0..20 {
        let wins: Vec<Vec<u64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 0 } else { r.random_range(1..20) }).collect())
            .collect();
        let t = tally(&names, wins);
        let s = bt_fit(&t, &opts).map_err(|e| e.to_string())?;
        let scaled = bt_fit(&t.scaled(7), &opts).map_err(|e| e.to_string())?;
        let d = s
            .scores
            .iter()
            .zip(&scaled.scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(d < 1e-9, || {
            format!("case {case}: scaling counts moves scores by {d:.2e}")
        })?;
        let at_fit = log_likelihood(&t, &s.scores);
        let at_uniform = log_likelihood(&t, &[0.2; 5]);
        ensure(at_fit >= at_uniform, || {
            format!("case {case}: likelihood {at_fit} < uniform {at_uniform}")
        })?;
    }

    // Published scores; a tally whose expected win shares follow them has them as its MLE.
    let published: [(&str, f64); 6] = [
        ("Naive Composite", 0.0933),
        ("Bhattad", 0.0893),
        ("Harmonizer", 0.1727),
        ("Wang", 0.2078),
        ("Ours (w/o reshading)", 0.1906),
        ("Ours (full)", 0.2485),
    ];
    let per_pair = 1_000_000.0;
    let wins = published
        .iter()
        .map(|(_, pi)| {
            published
                .iter()
                .map(|(_, pj)| {
                    if pi == pj {
                        0
                    } else {
                        (per_pair * pi / (pi + pj)).round() as u64
                    }
                })
                .collect()
        })
        .collect();
    let names: Vec<&str> = published.iter().map(|(n, _)| *n).collect();
    let s = bt_fit(&tally(&names, wins), &opts).map_err(|e| e.to_string())?;
    let total: f64 = published.iter().map(|(_, p)| p).sum();
    let mut fitted: Vec<(&str, f64)> = names.iter().copied().zip(s.scores.iter().copied()).collect();
    let mut expected: Vec<(&str, f64)> = published.to_vec();
    fitted.sort_by(|a, b| a.1.total_cmp(&b.1));
    expected.sort_by(|a, b| a.1.total_cmp(&b.1));
    let fitted_order: Vec<&str> = fitted.iter().map(|p| p.0).collect();
    let expected_order: Vec<&str> = expected.iter().map(|p| p.0).collect();
    ensure(fitted_order == expected_order, || {
        format!("ordering {fitted_order:?}, published {expected_order:?}")
    })?;
    for ((name, p), got) in published.iter().zip(&s.scores) {
        ensure((got - p / total).abs() < 1e-4, || {
            format!("{name}: {got:.5} vs published {:.5}", p / total)
        })?;
    }
    println!("    user-study ordering (ascending): {}", fitted_order.join(" < "));
    Ok(())
}

// ---------------------------------------------------------------------------------------
// 9. Determinism

fn ic(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ic"))
        .args(args)
        .env("IC_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "`ic {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out.stdout)
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    files
}

async fn service_render(scene: &ic_core::Scene, request: &str) -> Result<Vec<u8>, String> {
    let app = ic_service::router(ic_service::ServiceConfig::default());
    let (ct, body) = ic_service::encode_scene_upload(scene, &[]).map_err(|e| e.to_string())?;
    let call = |req: Request<Body>| {
        let app = app.clone();
        async move {
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
        }
    };
    let (status, created) = call(
        Request::post("/scenes")
            .header("content-type", ct)
            .body(Body::from(body))
            .unwrap(),
    )
    .await;
    ensure(status == StatusCode::CREATED, || format!("upload returned {status}"))?;
    let id = serde_json::from_slice::<serde_json::Value>(&created).unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let render = || {
        Request::post(format!("/scenes/{id}/render?scale=0.75"))
            .header("content-type", "application/json")
            .body(Body::from(request.to_string()))
            .unwrap()
    };
    let (s1, first) = call(render()).await;
    let (s2, second) = call(render()).await;
    ensure(s1 == StatusCode::OK && s2 == StatusCode::OK, || {
        format!("render returned {s1} / {s2}")
    })?;
    ensure(first == second, || "two identical renders differ".into())?;
    Ok(first)
}

fn criterion_9() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let w = work.path();
    let scene = synthetic::textured_self_composite_scene::<f64>(32, 9, 0.02);
    let manifest = write_scene(&w.join("scene"), &scene).map_err(|e| e.to_string())?;
    let m = manifest.to_str().unwrap();
    for seed in 0..3 {
        synthetic::lambertian_entry::<f64>(24, seed)
            .write(&w.join(format!("corpus/e{seed}")))
            .map_err(|e| e.to_string())?;
    }
    let mut csv = String::from("item_id,method_a,method_b,choice\n");
    for i in 0..30 {
        let (a, b) = [("naive", "ours"), ("ours", "wang"), ("wang", "naive")][i % 3];
        csv.push_str(&format!("{i},{a},{b},{}\n", if i % 4 == 0 { "b" } else { "a" }));
    }
    fs::write(w.join("responses.csv"), csv).map_err(|e| e.to_string())?;
    let csv_path = w.join("responses.csv");
    let corpus = w.join("corpus");
    let edits = r#"{"white_balance":[0.9,1,0.8],"saturation":1.1,"color_curve":[1,1.2,1],"exposure":1.2,"order":"CEWS","active":"WCE"}"#;

    let mut commands: Vec<(String, Invocation<'_>)> = Vec::new();
    commands.push(("fit-light".into(), Box::new(move |_| ic(&["fit-light", m]))));
    commands.push((
        "fit-light --lstsq --octant-constraint".into(),
        Box::new(move |_| ic(&["fit-light", m, "--lstsq", "--octant-constraint"])),
    ));
    for refiner in ["identity", "smooth"] {
        commands.push((
            format!("harmonize --refiner {refiner}"),
            Box::new(move |out: &Path| {
                ic(&[
                    "harmonize",
                    m,
                    "--out",
                    out.to_str().unwrap(),
                    "--refiner",
                    refiner,
                    "--edits",
                    edits,
                ])
            }),
        ));
    }
    commands.push((
        "harmonize --edits stats".into(),
        Box::new(move |out: &Path| ic(&["harmonize", m, "--out", out.to_str().unwrap(), "--edits", "stats"])),
    ));
    let c = corpus.clone();
    commands.push((
        "gen-pairs".into(),
        Box::new(move |out: &Path| {
            ic(&[
                "gen-pairs",
                c.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "11",
            ])
        }),
    ));
    let p = csv_path.clone();
    commands.push((
        "bt-rank".into(),
        Box::new(move |_| ic(&["bt-rank", p.to_str().unwrap()])),
    ));
    let p = csv_path.clone();
    commands.push((
        "bt-rank --json".into(),
        Box::new(move |_| ic(&["bt-rank", p.to_str().unwrap(), "--json"])),
    ));

    for (i, (name, run)) in commands.iter().enumerate() {
        let (a, b) = (w.join(format!("run{i}a")), w.join(format!("run{i}b")));
        let out_a = run(&a)?;
        let out_b = run(&b)?;
        ensure(out_a == out_b, || format!("`{name}` stdout differs between runs"))?;
        if a.exists() {
            let (ta, tb) = (tree(&a), tree(&b));
            ensure(!ta.is_empty(), || format!("`{name}` wrote nothing"))?;
            ensure(ta == tb, || format!("`{name}` output files differ between runs"))?;
        }
    }

    let request = r#"{"light": {"azimuth": 0.4, "elevation": 0.3, "intensity": 0.9, "ambient": 0.4},
                      "edits": {"white_balance": [1, 0.9, 0.8], "saturation": 0.9, "color_curve": [1, 1, 1],
                                "exposure": 1.1, "order": "SWCE", "active": "WSE"},
                      "refiner": "smooth"}"#;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let first = runtime.block_on(service_render(&scene, request))?;
    let second = runtime.block_on(service_render(&scene, request))?;
    ensure(first == second, || "renders differ across service instances".into())?;
    println!(
        "    {} CLI invocations and service renders byte-identical across runs",
        commands.len()
    );
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("light-fit recovery", criterion_1),
        ("solver cross-check", criterion_2),
        ("compositing algebra", criterion_3),
        ("loss suite and gradients", criterion_4),
        ("edit operations", criterion_5),
        ("pair generation", criterion_6),
        ("end-to-end self-composite", criterion_7),
        ("Bradley-Terry", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("criterion {}: PASS  {name} ({secs:.2}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.2}s): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
