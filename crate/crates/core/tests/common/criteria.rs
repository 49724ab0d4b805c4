//! Checks behind the acceptance criteria. Each returns a one-line summary
//! on success and the first violation on failure.

use std::path::Path;

use patchsel::autograd::{BnStats, ParamStore, Tape, Tensor, Var};
use patchsel::corpus::{corpus_specs, gen_image, make_patch_grid, CorpusConfig, CorpusManifest, Difficulty, Split};
use patchsel::eval::{evaluate, EvalOptions, Histogram, Restorer};
use patchsel::image::Image;
use patchsel::models::{
    build_res_block, num_stages, PatchNet, PatchNetConfig, PatchNetVariant, ResBlockConfig, RestoreNet,
    RestoreNetConfig,
};
use patchsel::mosaic::{
    add_noise, bayer_mask, bilinear_demosaic, mosaic_apply, psnr, BayerPattern, MosaicSample, PSNR_CAP_DB,
};
use patchsel::training::{
    hnm_threshold, per_patch_psnr, reweighted_loss, reweighted_loss_var, Checkpoint, TrainItem, TrainRun, Trainer,
    WEIGHT_EPS,
};
use rand::Rng;

use super::{check_model, check_op, positive_tensor, project, random_tensor, rng, ModelProbe};

pub type Outcome = Result<String, String>;

pub const CASES: usize = 24;
pub const OP_TOL: f64 = 1e-4;
pub const NET_TOL: f64 = 1e-3;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Gradient suite

pub fn grad_conv2d() -> Result<f64, String> {
    // (n, cin, h, w, cout, k, stride, pad, bias)
    let geoms = [
        (2, 3, 5, 6, 4, 3, 1, 1, true),
        (1, 2, 7, 7, 3, 3, 2, 1, true),
        (2, 4, 4, 4, 5, 1, 1, 0, false),
        (1, 3, 6, 5, 2, 3, 1, 0, true),
        (1, 2, 8, 8, 2, 5, 2, 2, false),
    ];
    let mut worst: f64 = 0.0;
    for (i, &(n, cin, h, w, cout, k, stride, pad, bias)) in geoms.iter().enumerate() {
        let mut r = rng(100 + i as u64);
        let mut inputs = vec![
            random_tensor(&mut r, &[n, cin, h, w], 0.0),
            random_tensor(&mut r, &[cout, cin, k, k], 0.0),
        ];
        if bias {
            inputs.push(random_tensor(&mut r, &[cout], 0.0));
        }
        let f = move |t: &mut Tape, v: &[Var]| t.conv2d(v[0], v[1], v.get(2).copied(), stride, pad).unwrap();
        worst = worst.max(check_op(
            &format!("conv2d#{i}"),
            &inputs,
            &f,
            CASES,
            OP_TOL,
            7 + i as u64,
        )?);
    }
    Ok(worst)
}

pub fn grad_avg_pool2() -> Result<f64, String> {
    let x = random_tensor(&mut rng(1), &[2, 3, 6, 8], 0.0);
    check_op("avg_pool2", &[x], &|t, v| t.avg_pool2(v[0]).unwrap(), CASES, OP_TOL, 2)
}

pub fn grad_batch_norm() -> Result<f64, String> {
    let mut r = rng(3);
    let inputs = [
        random_tensor(&mut r, &[3, 4, 3, 3], 0.0),
        positive_tensor(&mut r, &[4], 0.5, 1.5),
        random_tensor(&mut r, &[4], 0.0),
    ];
    let mut worst: f64 = 0.0;
    for training in [true, false] {
        let f = move |t: &mut Tape, v: &[Var]| {
            let mut stats = BnStats::new(4);
            stats.mean = vec![0.1, -0.2, 0.05, 0.0];
            stats.var = vec![0.8, 1.3, 0.5, 1.0];
            t.batch_norm(v[0], v[1], v[2], &mut stats, training).unwrap()
        };
        let name = if training {
            "batch_norm(train)"
        } else {
            "batch_norm(eval)"
        };
        worst = worst.max(check_op(name, &inputs, &f, CASES, NET_TOL, 4)?);
    }
    Ok(worst)
}

pub fn grad_leaky_relu() -> Result<f64, String> {
    let x = random_tensor(&mut rng(5), &[2, 3, 4, 4], 1e-3);
    check_op("leaky_relu", &[x], &|t, v| t.leaky_relu(v[0], 0.2), CASES, OP_TOL, 6)
}

pub fn grad_tempered_sigmoid() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (i, temp) in [0.5, 1.0, 2.0, 5.0].into_iter().enumerate() {
        let x = random_tensor(&mut rng(8 + i as u64), &[1, 1, 4, 6], 0.0);
        let f = move |t: &mut Tape, v: &[Var]| t.tempered_sigmoid(v[0], temp).unwrap();
        worst = worst.max(check_op("tempered_sigmoid", &[x], &f, CASES, OP_TOL, 9)?);
    }
    Ok(worst)
}

pub fn grad_reweighted_loss() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (i, n) in [1usize, 2, 5, 16].into_iter().enumerate() {
        let mut r = rng(20 + i as u64);
        let inputs = [
            positive_tensor(&mut r, &[n], 0.01, 2.0),
            positive_tensor(&mut r, &[n], 0.05, 0.95),
        ];
        let f = |t: &mut Tape, v: &[Var]| reweighted_loss_var(t, v[0], v[1], WEIGHT_EPS).unwrap();
        worst = worst.max(check_op("reweighted_loss", &inputs, &f, CASES, OP_TOL, 21)?);
    }
    Ok(worst)
}

pub fn grad_misc_ops() -> Result<f64, String> {
    let mut r = rng(30);
    let a = random_tensor(&mut r, &[2, 8, 3, 3], 0.0);
    let b = positive_tensor(&mut r, &[2, 8, 3, 3], 0.5, 2.0);
    let mut worst: f64 = 0.0;
    let checks: Vec<(&str, Box<dyn Fn(&mut Tape, &[Var]) -> Var>)> = vec![
        ("pixel_shuffle", Box::new(|t, v| t.pixel_shuffle(v[0], 2).unwrap())),
        ("pad2d", Box::new(|t, v| t.pad2d(v[0], 1, 2, 0, 3).unwrap())),
        ("softplus", Box::new(|t, v| t.softplus(v[0]))),
        ("mul", Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("div", Box::new(|t, v| t.div(v[0], v[1]).unwrap())),
        ("sub", Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        (
            "segment_mse",
            Box::new(|t, v| {
                let n = t.value(v[0]).len();
                let target = std::rc::Rc::new((0..n).map(|i| (i as f64 * 0.37).sin()).collect());
                let seg = std::rc::Rc::new(
                    (0..n as u32)
                        .map(|i| if i % 7 == 0 { u32::MAX } else { i % 5 })
                        .collect(),
                );
                t.segment_mse(v[0], target, seg, 5).unwrap()
            }),
        ),
    ];
    for (name, f) in &checks {
        worst = worst.max(check_op(name, &[a.clone(), b.clone()], f.as_ref(), CASES, OP_TOL, 31)?);
    }
    Ok(worst)
}

pub fn grad_res_block() -> Result<f64, String> {
    let configs = [
        ResBlockConfig::new(8, 2, false),
        ResBlockConfig::new(8, 4, true),
        ResBlockConfig {
            in_channels: 4,
            channels: 8,
            ratio: 2,
            with_bn: true,
            alpha: 0.2,
        },
    ];
    let mut worst: f64 = 0.0;
    for (i, cfg) in configs.into_iter().enumerate() {
        let mut model = build_res_block(cfg, 40 + i as u64).map_err(|e| e.to_string())?;
        let input = random_tensor(&mut rng(41 + i as u64), &[2, cfg.in_channels, 8, 8], 0.0);
        let params = model.params.clone();
        let mut run = |p: &ParamStore, x: &Tensor, want: bool| {
            model.params = p.clone();
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let (y, binder) = model.forward(&mut tape, xv, true, true).unwrap();
            let loss = project(&mut tape, y, 42);
            let value = tape.value(loss).item().unwrap();
            if !want {
                return (value, Vec::new(), None);
            }
            let mut g = tape.backward(loss).unwrap();
            let pg = binder.grads(&mut g);
            (value, pg, g.take(xv))
        };
        let mut probe = ModelProbe {
            params,
            input,
            run: &mut run,
        };
        worst = worst.max(check_model(&format!("res_block#{i}"), &mut probe, CASES, NET_TOL, 43)?);
    }
    Ok(worst)
}

pub fn grad_patchnet() -> Result<f64, String> {
    let cfg = PatchNetConfig::new(PatchNetVariant::Tiny, 8, 2.0)
        .and_then(|c| c.with_width_div(8))
        .map_err(|e| e.to_string())?;
    let mut net = PatchNet::build(cfg, 50).map_err(|e| e.to_string())?;
    let params = net.params().clone();
    let input = random_tensor(&mut rng(51), &[4, 3, 8, 8], 0.0);
    let mut run = |p: &ParamStore, x: &Tensor, want: bool| {
        *net.params_mut() = p.clone();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (out, binder) = net.forward(&mut tape, xv, false, true, true).unwrap();
        let loss = project(&mut tape, out.t, 52);
        let value = tape.value(loss).item().unwrap();
        if !want {
            return (value, Vec::new(), None);
        }
        let mut g = tape.backward(loss).unwrap();
        let pg = binder.grads(&mut g);
        (value, pg, g.take(xv))
    };
    let mut probe = ModelProbe {
        params,
        input,
        run: &mut run,
    };
    check_model("patchnet", &mut probe, CASES, NET_TOL, 53)
}

pub fn grad_restorenet() -> Result<f64, String> {
    let cfg = RestoreNetConfig {
        channels: 8,
        depth: 2,
        sigma_conditioning: true,
    };
    let mut net = RestoreNet::build(cfg, 60).map_err(|e| e.to_string())?;
    let params = net.params().clone();
    let input = positive_tensor(&mut rng(61), &[2, 5, 4, 4], 0.0, 1.0);
    let mut run = |p: &ParamStore, x: &Tensor, want: bool| {
        *net.params_mut() = p.clone();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (y, binder) = net.forward(&mut tape, xv, true).unwrap();
        let loss = project(&mut tape, y, 62);
        let value = tape.value(loss).item().unwrap();
        if !want {
            return (value, Vec::new(), None);
        }
        let mut g = tape.backward(loss).unwrap();
        let pg = binder.grads(&mut g);
        (value, pg, g.take(xv))
    };
    let mut probe = ModelProbe {
        params,
        input,
        run: &mut run,
    };
    check_model("restorenet", &mut probe, CASES, NET_TOL, 63)
}

pub type GradCheck = (&'static str, fn() -> Result<f64, String>);

pub const GRAD_CHECKS: &[GradCheck] = &[
    ("conv2d", grad_conv2d),
    ("avg_pool2", grad_avg_pool2),
    ("batch_norm", grad_batch_norm),
    ("leaky_relu", grad_leaky_relu),
    ("tempered_sigmoid", grad_tempered_sigmoid),
    ("reweighted_loss", grad_reweighted_loss),
    ("misc_ops", grad_misc_ops),
    ("res_block", grad_res_block),
    ("patchnet", grad_patchnet),
    ("restorenet", grad_restorenet),
];

pub fn criterion1() -> Outcome {
    let mut parts = Vec::new();
    for (name, check) in GRAD_CHECKS {
        let worst = check()?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("max rel err: {}", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// Reweighting invariants

/// Central-difference derivative of the reweighted total with respect to t_q.
pub fn fd_dtotal_dt(l: &[f64], t: &[f64], q: usize, h: f64) -> f64 {
    let at = |d: f64| {
        let mut tt = t.to_vec();
        tt[q] += d;
        let num: f64 = tt.iter().zip(l).map(|(a, b)| a * b).sum();
        num / (tt.iter().sum::<f64>() + WEIGHT_EPS)
    };
    (at(h) - at(-h)) / (2.0 * h)
}

pub fn criterion2() -> Outcome {
    let mut r = rng(70);
    let mut worst_sum: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for case in 0..500 {
        let n = r.gen_range(1..=64);
        let l: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| r.gen_range(1e-3..1.0)).collect();
        let rec = reweighted_loss(&l, &t, WEIGHT_EPS).map_err(|e| e.to_string())?;
        let st: f64 = t.iter().sum();
        let nf = n as f64;

        let exact = nf * st / (st + WEIGHT_EPS);
        let rel = (rec.weight_sum() - exact).abs() / nf;
        worst_sum = worst_sum.max(rel);
        ensure(rel <= 1e-9, || {
            format!("case {case}: weight sum {} vs {exact}", rec.weight_sum())
        })?;
        ensure((rec.weight_sum() - nf).abs() / nf <= 1e-9 + WEIGHT_EPS / st, || {
            format!(
                "case {case}: weight sum {} differs from N={n} beyond the guard",
                rec.weight_sum()
            )
        })?;

        let c = 10f64.powf(r.gen_range(-2.0..2.0));
        let ct: Vec<f64> = t.iter().map(|v| v * c).collect();
        let scaled = reweighted_loss(&l, &ct, WEIGHT_EPS).map_err(|e| e.to_string())?.total;
        let lmax = l.iter().cloned().fold(0.0, f64::max);
        let bound = 1e-12 * rec.total.abs() + 2.0 * lmax * WEIGHT_EPS / (c.min(1.0) * st);
        ensure((scaled - rec.total).abs() <= bound, || {
            format!("case {case}: scaling t by {c} moved total {} -> {scaled}", rec.total)
        })?;

        let v = r.gen_range(1e-3..1.0);
        let eq = reweighted_loss(&l, &vec![v; n], WEIGHT_EPS)
            .map_err(|e| e.to_string())?
            .total;
        let mean = l.iter().sum::<f64>() / nf;
        ensure((eq - mean).abs() <= 1e-12 + mean * WEIGHT_EPS / (nf * v), || {
            format!("case {case}: equal t gives {eq}, mean loss {mean}")
        })?;

        let mut tape = Tape::new();
        let lv = tape.leaf(Tensor::new(vec![n], l.clone()).unwrap());
        let tv = tape.leaf(Tensor::new(vec![n], t.clone()).unwrap());
        let total = reweighted_loss_var(&mut tape, lv, tv, WEIGHT_EPS).map_err(|e| e.to_string())?;
        let g = tape.backward(total).map_err(|e| e.to_string())?;
        let gt = g.get(tv).unwrap();
        for q in 0..n {
            let formula = (l[q] - rec.total) / (st + WEIGHT_EPS);
            let numeric = fd_dtotal_dt(&l, &t, q, 1e-5);
            let err = (formula - numeric).abs();
            let scale = formula.abs().max(numeric.abs());
            ensure(err <= 1e-10 || err <= 1e-6 * scale, || {
                format!("case {case}: d/dt_{q} formula {formula:e} numeric {numeric:e}")
            })?;
            ensure((gt[q] - formula).abs() <= 1e-12 * scale.max(1.0), || {
                format!("case {case}: tape d/dt_{q} {} vs formula {formula}", gt[q])
            })?;
            if err > 1e-10 {
                worst_grad = worst_grad.max(err / scale);
            }
        }
    }
    let sel = reweighted_loss(&[0.3, 0.9], &[1.0, 1e-12], WEIGHT_EPS).map_err(|e| e.to_string())?;
    ensure((sel.total - 0.3).abs() < 1e-9 + WEIGHT_EPS, || {
        format!("selection limit gives {}", sel.total)
    })?;
    Ok(format!(
        "500 cases; weight-sum rel err {worst_sum:.1e}, dtotal/dt rel err {worst_grad:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Selector structure

pub fn criterion3() -> Outcome {
    for k in [16usize, 64, 128] {
        let stages = num_stages(k).map_err(|e| e.to_string())?;
        ensure(1 << stages == k, || format!("k={k}: {stages} stages"))?;
        let cfg = PatchNetConfig::new(PatchNetVariant::Tiny, k, 2.0)
            .and_then(|c| c.with_width_div(8))
            .map_err(|e| e.to_string())?;
        let mut net = PatchNet::build(cfg, 0).map_err(|e| e.to_string())?;
        ensure(net.num_pool_layers() == stages, || {
            format!("k={k}: {} pooling layers, expected {stages}", net.num_pool_layers())
        })?;
        let (h, w) = (2 * k, 3 * k);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 3, h, w]));
        let (out, _) = net
            .forward(&mut tape, x, false, false, false)
            .map_err(|e| e.to_string())?;
        let shape = tape.value(out.t).shape().to_vec();
        ensure(shape == [1, 1, h / k, w / k], || format!("k={k}: map shape {shape:?}"))?;
    }
    for (variant, blocks) in [(PatchNetVariant::Tiny, 8), (PatchNetVariant::Large, 25)] {
        let cfg = PatchNetConfig::new(variant, 64, 2.0).map_err(|e| e.to_string())?;
        ensure(cfg.total_blocks() == blocks, || {
            format!("{variant}: {} blocks", cfg.total_blocks())
        })?;
        let net = PatchNet::build(cfg.with_width_div(8).map_err(|e| e.to_string())?, 0).map_err(|e| e.to_string())?;
        ensure(net.num_blocks() == blocks, || {
            format!("{variant}: built {} blocks", net.num_blocks())
        })?;
    }
    Ok("k in {16,64,128}: log2(k) pools, (H/k)x(W/k) maps; tiny 8 / large 25 blocks".into())
}

// ---------------------------------------------------------------------------
// Mosaic and PSNR oracles

/// Bilinear PSNR on the 64×64 one-pixel checkerboard, RGGB, pinned from an
/// oracle run of this implementation.
pub const NYQUIST_BILINEAR_PSNR: f64 = 3.0102999566398116;

pub fn nyquist_checkerboard(size: usize) -> Image {
    let mut im = Image::zeros(size, size);
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                im.set(c, y, x, ((x + y) % 2) as f64);
            }
        }
    }
    im
}

pub fn criterion4() -> Outcome {
    let patterns = [
        BayerPattern::RGGB,
        BayerPattern::BGGR,
        BayerPattern::GRBG,
        BayerPattern::GBRG,
    ];
    for p in patterns {
        let m = bayer_mask(8, 10, p).map_err(|e| e.to_string())?;
        for y in 0..8 {
            for x in 0..10 {
                let s: f64 = (0..3).map(|c| m.get(c, y, x)).sum();
                ensure(s == 1.0, || format!("{}: mask sums to {s} at ({y},{x})", p.name()))?;
            }
        }
        for cy in (0..8).step_by(2) {
            for cx in (0..10).step_by(2) {
                let mut counts = [0; 3];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    counts[p.channel_at(cy + dy, cx + dx) as usize] += 1;
                }
                ensure(counts == [1, 2, 1], || format!("{}: cell counts {counts:?}", p.name()))?;
            }
        }
        let img = Image::filled(16, 12, [0.2, 0.55, 0.8]);
        let raw = mosaic_apply(&img, p).map_err(|e| e.to_string())?;
        let same = add_noise(&raw, 0.0, 99).map_err(|e| e.to_string())?;
        ensure(same == raw, || "sigma 0 changed the raw".into())?;
        let s = MosaicSample::degrade(img.clone(), p, 0.0, 5).map_err(|e| e.to_string())?;
        ensure(s.noisy_raw == s.clean_raw, || {
            "degrade at sigma 0 is not the identity".into()
        })?;
        let rec = bilinear_demosaic(&raw, p).map_err(|e| e.to_string())?;
        let q = psnr(&rec, &img).map_err(|e| e.to_string())?;
        ensure(q == PSNR_CAP_DB, || {
            format!("{}: constant image reconstructs at {q} dB", p.name())
        })?;
    }
    let board = nyquist_checkerboard(64);
    let raw = mosaic_apply(&board, BayerPattern::RGGB).map_err(|e| e.to_string())?;
    let q = psnr(
        &bilinear_demosaic(&raw, BayerPattern::RGGB).map_err(|e| e.to_string())?,
        &board,
    )
    .map_err(|e| e.to_string())?;
    ensure(q < 20.0, || format!("checkerboard scores {q} dB"))?;
    ensure((q - NYQUIST_BILINEAR_PSNR).abs() < 1e-9, || {
        format!("checkerboard scores {q} dB, pinned {NYQUIST_BILINEAR_PSNR}")
    })?;
    let p20 = psnr(&Image::zeros(4, 4), &Image::filled(4, 4, [0.1; 3])).map_err(|e| e.to_string())?;
    ensure((p20 - 20.0).abs() < 1e-12, || format!("psnr(0, 0.1) = {p20:.17}"))?;
    Ok(format!(
        "masks, sigma-0 identity, constant cap, checkerboard {q:.4} dB, psnr(0,0.1)=20"
    ))
}

// ---------------------------------------------------------------------------
// Hard-example mining semantics

fn constant_item(value: f64, size: usize) -> TrainItem {
    let gt = Image::filled(size, size, [value; 3]);
    TrainItem {
        sample: MosaicSample::degrade(gt, BayerPattern::RGGB, 0.0, 0).unwrap(),
        grid: make_patch_grid(size, size, 64, false, 0).unwrap(),
    }
}

/// A small HNM trainer whose RestoreNet outputs the constant `level`.
pub fn constant_output_trainer(extra: &str, level: f64) -> Result<Trainer, String> {
    let text = format!("mode = hnm\nhnm_threshold = 40\nrestore_channels = 8\nrestore_depth = 1\n{extra}");
    let run = TrainRun::parse(&text).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(run).map_err(|e| e.to_string())?;
    let head = trainer.restore.head().clone();
    let params = trainer.restore.params_mut();
    params.get_mut(head.weight).data_mut().fill(0.0);
    params.get_mut(head.bias).data_mut().fill(level);
    Ok(trainer)
}

pub fn criterion5() -> Outcome {
    let mut trainer = constant_output_trainer("", 0.5)?;
    let easy: Vec<TrainItem> = (0..2).map(|_| constant_item(0.5, 128)).collect();
    let sg = trainer.step_grads(&easy, 0).map_err(|e| e.to_string())?;
    ensure(sg.skipped, || "all-easy batch was not skipped".into())?;
    let nonzero = sg.restore.iter().flatten().flatten().filter(|&&g| g != 0.0).count();
    ensure(nonzero == 0, || {
        format!("all-easy batch left {nonzero} nonzero RestoreNet gradients")
    })?;

    let mixed = vec![constant_item(0.5, 128), constant_item(0.6, 128)];
    let sg = trainer.step_grads(&mixed, 0).map_err(|e| e.to_string())?;
    let nonzero = sg.restore.iter().flatten().flatten().filter(|&&g| g != 0.0).count();
    ensure(!sg.skipped && nonzero > 0, || {
        "a hard patch produced no gradient".into()
    })?;

    let (s, e) = (45.0, 35.0);
    ensure(hnm_threshold(0, s, e, 29).map_err(|e| e.to_string())? == 45.0, || {
        "schedule start".into()
    })?;
    ensure(hnm_threshold(29, s, e, 29).map_err(|e| e.to_string())? == 35.0, || {
        "schedule end".into()
    })?;
    let run =
        TrainRun::parse("mode = hnm\nhnm_start_db = 45\nhnm_end_db = 35\nepochs = 30\n").map_err(|e| e.to_string())?;
    let t = Trainer::new(run).map_err(|e| e.to_string())?;
    let first = t.threshold(0).map_err(|e| e.to_string())?;
    let last = t.threshold(29).map_err(|e| e.to_string())?;
    ensure(first == 45.0 && last == 35.0, || {
        format!("trainer schedule {first} -> {last}")
    })?;
    Ok("all-easy batch: zero gradient, skipped; schedule 45 -> 35 dB".into())
}

// ---------------------------------------------------------------------------
// Long-tail patch distribution

/// Fraction of easy-image patches above 40 dB on the default corpus with
/// seed 0, pinned from an oracle run.
pub const PINNED_EASY_ABOVE_40: f64 = 1.0;
pub const LONG_TAIL_SEEDS: [u64; 3] = [0, 1, 2];

pub struct LongTail {
    pub easy_above_40: f64,
    pub hard_hist: Histogram,
    pub easy_hist: Histogram,
}

/// Bilinear per-patch PSNR (σ = 0, 64-pixel patches) over every image of
/// the default corpus generated with `seed`.
pub fn long_tail(seed: u64) -> Result<LongTail, String> {
    let cfg = CorpusConfig {
        seed,
        ..Default::default()
    };
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    for (entry, spec) in corpus_specs(&cfg).map_err(|e| e.to_string())? {
        let gt = gen_image(&spec).map_err(|e| e.to_string())?;
        let raw = mosaic_apply(&gt, BayerPattern::RGGB).map_err(|e| e.to_string())?;
        let pred = bilinear_demosaic(&raw, BayerPattern::RGGB).map_err(|e| e.to_string())?;
        let grid = make_patch_grid(gt.height(), gt.width(), 64, false, 0).map_err(|e| e.to_string())?;
        let p = per_patch_psnr(&pred, &gt, &grid).map_err(|e| e.to_string())?;
        let dst = if entry.label == Difficulty::Hard {
            &mut hard
        } else {
            &mut easy
        };
        dst.extend(p.iter().zip(grid.valid_mask()).filter(|(_, v)| *v).map(|(p, _)| *p));
    }
    let hist = |v: &[f64]| Histogram::new(v, 20, 0.0, PSNR_CAP_DB).map_err(|e| e.to_string());
    Ok(LongTail {
        easy_above_40: easy.iter().filter(|&&p| p > 40.0).count() as f64 / easy.len() as f64,
        hard_hist: hist(&hard)?,
        easy_hist: hist(&easy)?,
    })
}

pub fn criterion6() -> Outcome {
    let mut parts = Vec::new();
    for seed in LONG_TAIL_SEEDS {
        let lt = long_tail(seed)?;
        let mode = lt.hard_hist.mode();
        let width = (lt.hard_hist.hi - lt.hard_hist.lo) / lt.hard_hist.counts.len() as f64;
        ensure(lt.easy_above_40 >= 0.60, || {
            format!(
                "seed {seed}: only {:.1}% of easy patches above 40 dB",
                100.0 * lt.easy_above_40
            )
        })?;
        ensure((lt.easy_above_40 - PINNED_EASY_ABOVE_40).abs() <= 0.05, || {
            format!(
                "seed {seed}: easy fraction {:.3} drifted from pinned {PINNED_EASY_ABOVE_40}",
                lt.easy_above_40
            )
        })?;
        ensure(mode + width <= 30.0, || {
            format!("seed {seed}: hard mode bin starts at {mode} dB")
        })?;
        parts.push(format!(
            "seed {seed}: easy>40 {:.1}%, hard mode [{mode}, {})",
            100.0 * lt.easy_above_40,
            mode + width
        ));
    }
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------------------
// Evaluation without the selector

/// Evaluates `ckpt_path` with and without its PatchNet tensors; the two
/// reports must agree exactly.
pub fn criterion10(ckpt_path: &Path, corpus: &Path, scratch: &Path) -> Outcome {
    let full = Checkpoint::load(ckpt_path).map_err(|e| e.to_string())?;
    ensure(full.has_prefix("patch."), || "checkpoint carries no PatchNet".into())?;
    let stripped = full.clone().without_prefix("patch.");
    ensure(!stripped.has_prefix("patch."), || "strip left PatchNet tensors".into())?;
    let stripped_path = scratch.join("stripped.pfck");
    stripped.save(&stripped_path).map_err(|e| e.to_string())?;
    let manifest = CorpusManifest::load(corpus)
        .map_err(|e| e.to_string())?
        .split(Split::Test);
    let opts = EvalOptions::default();
    let run = |path: &Path| -> Result<Vec<Vec<f64>>, String> {
        let ckpt = Checkpoint::load(path).map_err(|e| e.to_string())?;
        let restorer = Restorer::from_checkpoint(&ckpt).map_err(|e| e.to_string())?;
        let report = evaluate(&restorer, "m", &manifest, &[10.0], &opts).map_err(|e| e.to_string())?;
        Ok(report.rows.into_iter().map(|r| r.per_image).collect())
    };
    let with = run(ckpt_path)?;
    let without = run(&stripped_path)?;
    ensure(with == without, || "PSNR changed after removing the PatchNet".into())?;
    let mean = with[0].iter().sum::<f64>() / with[0].len() as f64;
    let bytes = std::fs::metadata(ckpt_path).map(|m| m.len()).unwrap_or(0);
    let sbytes = std::fs::metadata(&stripped_path).map(|m| m.len()).unwrap_or(0);
    Ok(format!(
        "identical PSNR ({mean:.4} dB mean) from {bytes} B and stripped {sbytes} B checkpoints"
    ))
}
