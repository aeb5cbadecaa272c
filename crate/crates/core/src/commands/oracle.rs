use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::gradcheck::{check, check_params};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::fixtures;
use crate::metrics::{psnr, ssim};
use crate::nnets::{BackboneConfig, LfmnConfig};
use crate::optimize::{
    build_pipeline, forward_pipeline, untiled_forward, MergeKind, Optics, PipelineConfig, PipelineParams,
};
use crate::propagation::{dft_oracle, inner, inject_adjoint_fault, propagate, TransferFunction};
use crate::tiling::{group_tiles, pixel_shuffle, pixel_unshuffle, TileStack};
use crate::wavefield::ComplexField;

const PITCH: f64 = 3.74e-6;
const LAMBDA: f64 = 520e-9;
const DIST: f64 = 1e-3;

#[derive(Debug, Clone, clap::Args)]
pub struct OracleArgs {
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Self-test of the suite: breaks the named kernel before checking.
    #[arg(long, hide = true, value_parser = ["adjoint"])]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Measured error (or 0/1 for exact identities).
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<CheckOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!(
                "{} {:<28} value={:.3e} tol={:.1e}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s += &format!("{} checks, {failed} failed\n", self.checks.len());
        s
    }
}

fn below(name: &str, value: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed: value < tolerance,
        value,
        tolerance,
    }
}

fn exact(name: &str, ok: bool) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed: ok,
        value: if ok { 0.0 } else { 1.0 },
        tolerance: 0.0,
    }
}

fn random_complex(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    Array2::from_shape_simple_fn((h, w), || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn max_abs(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Random field whose spectrum lies inside the band of `tf` (pad factor 1).
fn in_band_field(tf: &TransferFunction, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    let (h, w) = tf.dim();
    let mut spec = random_complex(h, w, rng);
    spec.zip_mut_with(tf.band_mask(), |z, m| {
        if !m {
            *z = Complex64::new(0.0, 0.0)
        }
    });
    tf.inverse_spectrum(&spec)
}

fn propagation_checks(out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let tf = TransferFunction::new(32, 32, PITCH, LAMBDA, DIST, 2)?;
    let f = ComplexField::new(random_complex(32, 32, &mut rng), PITCH, LAMBDA)?;
    let fast = propagate(&f, &tf)?;
    let slow = dft_oracle(&f, &tf)?;
    out.push(below("asm_vs_direct_dft_32", max_abs(fast.data(), slow.data()), 1e-10));

    let tf = TransferFunction::new(64, 64, PITCH, LAMBDA, DIST, 1)?;
    let x = in_band_field(&tf, &mut rng);
    let y = tf.apply(&x)?;
    let e_in: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    let e_out: f64 = y.iter().map(|z| z.norm_sqr()).sum();
    out.push(below("energy_conservation_64", (e_out - e_in).abs() / e_in, 1e-10));

    let back = tf.reversed();
    let round = back.apply(&y)?;
    out.push(below("reciprocity_round_trip_64", max_abs(&round, &x), 1e-8));

    let tf = TransferFunction::new(16, 16, PITCH, LAMBDA, DIST, 2)?;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = random_complex(16, 16, &mut rng);
        let y = random_complex(16, 16, &mut rng);
        let lhs = inner(&tf.apply(&x)?, &y);
        let rhs = inner(&x, &tf.apply_adjoint(&y)?);
        worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()));
    }
    out.push(below("adjoint_identity_16", worst, 1e-10));
    Ok(())
}

fn tiling_checks(out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut ok = true;
    for r in 1..=4 {
        for _ in 0..4 {
            let (h, w) = (r * rng.gen_range(1..7), r * rng.gen_range(1..7));
            let x = Array2::from_shape_simple_fn((h, w), || rng.gen::<f64>());
            let t = pixel_unshuffle(&x, r)?;
            ok &= pixel_shuffle(&t, r)? == x;
            let tiles = Array3::from_shape_simple_fn((r * r, h / r, w / r), || rng.gen::<f64>());
            let stack = TileStack::new(tiles.clone(), r)?;
            ok &= pixel_unshuffle(&pixel_shuffle(&stack, r)?, r)?.tiles() == tiles;
        }
    }
    out.push(exact("shuffle_unshuffle_bijective", ok));

    let x = Array2::from_shape_simple_fn((24, 16), || rng.gen::<f64>());
    let t4 = pixel_unshuffle(&x, 4)?;
    let groups = group_tiles(&t4)?;
    let (gh, gw) = (6, 4);
    let mut merged = Array3::zeros((4, gh * 2, gw * 2));
    for (g, stack) in groups.iter().enumerate() {
        merged.index_axis_mut(ndarray::Axis(0), g).assign(&pixel_shuffle(stack, 2)?);
    }
    let twice = pixel_shuffle(&TileStack::new(merged, 2)?, 2)?;
    out.push(exact("pyramid_grouping_identity", twice == pixel_shuffle(&t4, 4)? && twice == x));
    Ok(())
}

fn rand4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_shape_simple_fn(shape, || rng.gen_range(-1.0..1.0))
}

fn project(t: &mut Tape, y: Var, rng_seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = t.constant(rand4(t.value(y).dim(), &mut rng));
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

type OpCase = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let tf = Arc::new(TransferFunction::new(6, 6, PITCH, LAMBDA, DIST, 2).expect("valid optics"));
    let target = rand4((1, 1, 6, 6), rng).mapv(f64::abs);
    let target2 = target.clone();
    vec![
        (
            "conv_same",
            vec![rand4((1, 2, 5, 4), rng), rand4((3, 2, 3, 3), rng), rand4((1, 3, 1, 1), rng)],
            Box::new(|t, v| {
                let b = t.constant(Tensor::zeros((1, 3, 1, 1)));
                let y = t.conv_same(v[0], v[1], Some(b))?;
                let y = t.add(y, v[2])?;
                project(t, y, 1)
            }),
        ),
        (
            "conv_strided",
            vec![rand4((1, 2, 6, 6), rng), rand4((2, 2, 3, 3), rng)],
            Box::new(|t, v| {
                let y = t.conv2d(v[0], v[1], None, 2, 1)?;
                project(t, y, 2)
            }),
        ),
        (
            "conv_transpose2x2",
            vec![rand4((1, 2, 3, 3), rng), rand4((2, 3, 2, 2), rng)],
            Box::new(|t, v| {
                let y = t.conv_transpose2x2(v[0], v[1], None)?;
                project(t, y, 3)
            }),
        ),
        (
            "leaky_relu_sigmoid",
            vec![rand4((1, 2, 4, 4), rng)],
            Box::new(|t, v| {
                let a = t.leaky_relu(v[0], 0.1);
                let b = t.sigmoid(v[0]);
                let y = t.mul(a, b)?;
                project(t, y, 4)
            }),
        ),
        (
            "grn",
            vec![rand4((1, 3, 4, 4), rng), rand4((1, 3, 1, 1), rng), rand4((1, 3, 1, 1), rng)],
            Box::new(|t, v| {
                let y = t.grn(v[0], v[1], v[2])?;
                project(t, y, 5)
            }),
        ),
        (
            "concat_select_scale",
            vec![rand4((1, 2, 3, 3), rng), rand4((1, 1, 3, 3), rng)],
            Box::new(|t, v| {
                let c = t.concat(&[v[0], v[1]])?;
                let s = t.select_channels(c, &[2, 0])?;
                let y = t.scale(s, -1.5);
                project(t, y, 6)
            }),
        ),
        (
            "pixel_shuffle_unshuffle",
            vec![rand4((1, 4, 3, 2), rng), rand4((1, 1, 6, 4), rng)],
            Box::new(|t, v| {
                let a = t.pixel_shuffle(v[0], 2)?;
                let b = t.pixel_unshuffle(v[1], 2)?;
                let pa = project(t, a, 7)?;
                let pb = project(t, b, 8)?;
                t.add(pa, pb)
            }),
        ),
        (
            "polar_propagate_modulus_mse",
            vec![rand4((1, 1, 6, 6), rng), rand4((1, 1, 6, 6), rng)],
            Box::new(move |t, v| {
                let f = t.polar(v[0], v[1])?;
                let g = t.propagate(f, &tf)?;
                let a = t.modulus(g)?;
                let target = t.constant(target.clone());
                t.mse(a, target)
            }),
        ),
        (
            "scaled_mse",
            vec![rand4((1, 1, 6, 6), rng)],
            Box::new(move |t, v| {
                let target = t.constant(target2.clone());
                t.scaled_mse(v[0], target)
            }),
        ),
    ]
}

fn tiny_config(scale: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        scale,
        backbone: BackboneConfig { widths: vec![4, 8] },
        lfmn: LfmnConfig {
            features: 4,
            blocks: 1,
            ..LfmnConfig::default()
        },
        ..PipelineConfig::default()
    };
    cfg.optical.distance = DIST;
    cfg
}

/// Scrambles every parameter so that no gradient path is trivially zero.
fn scrambled(cfg: &PipelineConfig, seed: u64) -> Result<PipelineParams> {
    let mut p = PipelineParams::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = p.store.ids().collect();
    for id in ids {
        p.store.get_mut(id).mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    Ok(p)
}

fn gradient_checks(out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (name, inputs, build) in op_cases(&mut rng) {
        let r = check(&inputs, 1e-6, |t: &mut Tape, v: &[Var]| build(t, v))?;
        out.push(below(&format!("gradient_{name}"), r.rel_error, 1e-5));
    }

    let cfg = tiny_config(2);
    let p = scrambled(&cfg, 14)?;
    let img = fixtures::image(3, 16, 16);
    let optics = Optics::new(&cfg, 16, 16)?;
    let build = |t: &mut Tape, s: &ParamStore| {
        let q = PipelineParams {
            store: s.clone(),
            ..p.clone()
        };
        Ok(build_pipeline(t, &img, &q, &cfg, &optics)?.loss)
    };
    let r = check_params(&p.store, 3, 1e-6, build)?;
    out.push(below("gradient_pipeline_16_r2", r.rel_error, 1e-4));
    Ok(())
}

fn degeneracy_checks(out: &mut Vec<CheckOutcome>) -> Result<()> {
    let img = fixtures::image(5, 32, 32);

    let cfg = tiny_config(2);
    let mut lfmn = PipelineParams::init(&cfg, 21)?;
    lfmn.zero_merge();
    let shuffle_cfg = PipelineConfig {
        merge: MergeKind::Shuffle,
        ..cfg.clone()
    };
    let shuffle = PipelineParams::init(&shuffle_cfg, 21)?;
    let a = forward_pipeline(&img, &lfmn, &cfg)?;
    let b = forward_pipeline(&img, &shuffle, &shuffle_cfg)?;
    out.push(exact("zero_lfmn_equals_shuffle", a == b));

    let cfg = tiny_config(1);
    let p = PipelineParams::init(&cfg, 22)?;
    out.push(exact(
        "scale1_equals_untiled",
        forward_pipeline(&img, &p, &cfg)? == untiled_forward(&img, &p, &cfg)?,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let xv = rand4((1, 3, 5, 5), &mut rng);
    let mut t = Tape::new();
    let x = t.constant(xv.clone());
    let z = t.constant(Tensor::zeros((1, 3, 1, 1)));
    let y = t.grn(x, z, z)?;
    out.push(exact("grn_zero_is_identity", t.value(y) == xv));
    Ok(())
}

fn metric_checks(out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let a = Array2::from_shape_simple_fn((16, 16), || rng.gen::<f64>());
        let b = Array2::from_shape_simple_fn((16, 16), || rng.gen::<f64>());
        let m = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 256.0;
        worst = worst.max((psnr(a.view(), b.view())? - (-10.0 * m.log10())).abs());
    }
    out.push(below("psnr_closed_form", worst, 1e-9));
    let a = Array2::from_shape_simple_fn((20, 20), || rng.gen::<f64>());
    out.push(below("ssim_self_is_one", (ssim(a.view(), a.view())? - 1.0).abs(), 1e-12));
    Ok(())
}

/// Runs every oracle suite and collects one outcome per check.
pub fn run_oracle_checks() -> Result<OracleReport> {
    let mut checks = Vec::new();
    propagation_checks(&mut checks)?;
    tiling_checks(&mut checks)?;
    gradient_checks(&mut checks)?;
    degeneracy_checks(&mut checks)?;
    metric_checks(&mut checks)?;
    Ok(OracleReport { checks })
}

pub fn cmd_oracle_check(args: &OracleArgs) -> Result<OracleReport> {
    let fault = args.inject_fault.is_some();
    if fault {
        inject_adjoint_fault(true);
    }
    let report = run_oracle_checks();
    if fault {
        inject_adjoint_fault(false);
    }
    report
}
