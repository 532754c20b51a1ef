//! Acceptance suite. Runs each criterion in turn, prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use arcbo::bench::{
    run_bo_experiment, run_regression_experiment, BoArm, BoResult, ExperimentConfig, ModelKind,
    RegressionResult, SyntheticObjective,
};
use arcbo::bo::expected_improvement;
use arcbo::gp::{GpModel, Warp};
use arcbo::infer::{slice_step, HyperState, McmcSettings};
use arcbo::kernel::{
    arc_distance, arc_kernel, gram, ArcParams, BaseCovariance, KernelInput, KernelParams,
    PlainParams,
};
use arcbo::space::{Dimension, ParameterSpace, Point};

// ---------------------------------------------------------------------------
// Independent oracles

fn oracle_kappa(base: BaseCovariance, d: f64, amp: f64) -> f64 {
    match base {
        BaseCovariance::ExpQuadratic => amp * (-0.5 * d * d).exp(),
        BaseCovariance::RationalQuadratic { alpha } => {
            amp * (1.0 + d * d / (2.0 * alpha)).powf(-alpha)
        }
        BaseCovariance::Matern52 => {
            let r = 5f64.sqrt() * d;
            amp * (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}

/// Cylindrical embedding written out from its definition.
fn oracle_embed(space: &ParameterSpace, omega: &[f64], rho: &[f64], p: &Point) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, dim) in space.dims().iter().enumerate() {
        if p.mask()[i] {
            let theta = PI * rho[i] * (p.values()[i] - dim.lower) / (dim.upper - dim.lower);
            out.extend([omega[i] * theta.sin(), omega[i] * theta.cos()]);
        } else {
            out.extend([0.0, 0.0]);
        }
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn random_space(rng: &mut ChaCha8Rng, max_dims: usize) -> ParameterSpace {
    let max_depth = rng.random_range(1..=3);
    let n = rng.random_range(1..=max_dims);
    let dims = (0..n)
        .map(|i| {
            let lower = rng.random_range(-5.0..5.0);
            let width = rng.random_range(0.1..10.0);
            Dimension::new(
                format!("x{i}"),
                lower,
                lower + width,
                rng.random_range(0..=max_depth),
            )
        })
        .collect();
    ParameterSpace::new(max_depth, dims).unwrap()
}

fn random_point(space: &ParameterSpace, rng: &mut ChaCha8Rng) -> Point {
    let depth = rng.random_range(0..=space.max_depth());
    let values: Vec<f64> = space
        .dims()
        .iter()
        .map(|d| rng.random_range(d.lower..=d.upper))
        .collect();
    space.make_point(depth as f64, &values).unwrap()
}

fn random_base(rng: &mut ChaCha8Rng) -> BaseCovariance {
    match rng.random_range(0..3) {
        0 => BaseCovariance::ExpQuadratic,
        1 => BaseCovariance::RationalQuadratic {
            alpha: rng.random_range(0.3..5.0),
        },
        _ => BaseCovariance::Matern52,
    }
}

fn random_params(dims: usize, base: BaseCovariance, rng: &mut ChaCha8Rng) -> ArcParams {
    let omega = (0..dims).map(|_| rng.random_range(0.05..4.0)).collect();
    let rho = (0..dims).map(|_| rng.random_range(0.0..=1.0)).collect();
    ArcParams::new(omega, rho, rng.random_range(0.2..3.0), base).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn kernel_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let space = random_space(&mut rng, 8);
        let params = random_params(space.len(), random_base(&mut rng), &mut rng);
        let (p, q) = (
            random_point(&space, &mut rng),
            random_point(&space, &mut rng),
        );
        let closed = arc_distance(&space, &params, &p, &q).unwrap();
        let emb = euclid(
            &oracle_embed(&space, &params.omega, &params.rho, &p),
            &oracle_embed(&space, &params.omega, &params.rho, &q),
        );
        worst = worst.max((closed - emb).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("embedding disagreement {worst:e}")
    })?;

    // invariance under irrelevant coordinates, both-hidden and one-side-hidden
    for _ in 0..2_000 {
        let space = random_space(&mut rng, 8);
        let params = random_params(space.len(), random_base(&mut rng), &mut rng);
        let (p, q) = (
            random_point(&space, &mut rng),
            random_point(&space, &mut rng),
        );
        let k = arc_kernel(&space, &params, &p, &q).unwrap();
        let redraw = |pt: &Point, keep: &dyn Fn(usize) -> bool, rng: &mut ChaCha8Rng| {
            let vals: Vec<f64> = (0..space.len())
                .map(|i| {
                    let d = &space.dims()[i];
                    if keep(i) {
                        pt.values()[i]
                    } else {
                        rng.random_range(d.lower..=d.upper)
                    }
                })
                .collect();
            space.make_point(pt.depth() as f64, &vals).unwrap()
        };
        let both_hidden = |i: usize| p.mask()[i] || q.mask()[i];
        let p2 = redraw(&p, &both_hidden, &mut rng);
        let q2 = redraw(&q, &both_hidden, &mut rng);
        let k2 = arc_kernel(&space, &params, &p2, &q2).unwrap();
        ensure(k.to_bits() == k2.to_bits(), || {
            format!("hidden-in-both change: {k} vs {k2}")
        })?;
        let p3 = redraw(&p, &|i| p.mask()[i] || !q.mask()[i], &mut rng);
        let q3 = redraw(&q, &|i| q.mask()[i] || !p.mask()[i], &mut rng);
        let k3 = arc_kernel(&space, &params, &p3, &q3).unwrap();
        ensure(k.to_bits() == k3.to_bits(), || {
            format!("one-side change: {k} vs {k3}")
        })?;
    }

    let mut min_ratio = f64::INFINITY;
    for base in [
        BaseCovariance::ExpQuadratic,
        BaseCovariance::RationalQuadratic { alpha: 2.0 },
        BaseCovariance::Matern52,
    ] {
        for _ in 0..50 {
            let space = random_space(&mut rng, 10);
            let params = random_params(space.len(), base, &mut rng);
            let n = 50;
            let points: Vec<Point> = (0..n).map(|_| random_point(&space, &mut rng)).collect();
            let g = gram(&space, &params, &points).unwrap();
            let min = SymmetricEigen::new(g).eigenvalues.min();
            let floor = -1e-8 * n as f64 * params.amplitude;
            ensure(min >= floor, || {
                format!("{base:?}: min eigenvalue {min:e} below {floor:e}")
            })?;
            min_ratio = min_ratio.min(min / params.amplitude);
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!(
        "max |closed - embedded| = {worst:.1e}; invariances exact; min eig/σ² = {min_ratio:.1e}; {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn case_table() -> Outcome {
    let space = ParameterSpace::new(1, vec![Dimension::new("x", 2.0, 6.0, 1)]).unwrap();
    let at = |depth: f64, x: f64| space.make_point(depth, &[x]).unwrap();
    let params = |omega: f64, rho: f64| {
        ArcParams::new(vec![omega], vec![rho], 1.0, BaseCovariance::Matern52).unwrap()
    };
    let expected_half_turn = 2f64.sqrt() * (1.0 - PI.cos()).sqrt();
    let expected_third = 2f64.sqrt() * (1.0 - (PI / 3.0).cos()).sqrt();
    let cases = [
        (
            "both irrelevant",
            params(1.7, 0.3),
            at(0.0, 2.5),
            at(0.0, 5.5),
            0.0,
        ),
        (
            "mismatch",
            params(0.7, 0.3),
            at(1.0, 2.5),
            at(0.0, 5.5),
            0.7,
        ),
        (
            "mismatch reversed",
            params(0.7, 0.9),
            at(0.0, 2.5),
            at(1.0, 3.0),
            0.7,
        ),
        (
            "both relevant, rho 1, gap 1",
            params(1.0, 1.0),
            at(1.0, 2.0),
            at(1.0, 6.0),
            expected_half_turn,
        ),
        (
            "rho 1/3 crossover",
            params(1.0, 1.0 / 3.0),
            at(1.0, 2.0),
            at(1.0, 6.0),
            expected_third,
        ),
        (
            "rho 1/3 crossover equals omega",
            params(1.0, 1.0 / 3.0),
            at(1.0, 2.0),
            at(1.0, 6.0),
            1.0,
        ),
    ];
    for (name, p, a, b, want) in &cases {
        let got = arc_distance(&space, p, a, b).unwrap();
        ensure((got - want).abs() <= 1e-12, || {
            format!("{name}: got {got}, want {want}")
        })?;
    }
    ensure((expected_half_turn - 2.0).abs() <= 1e-12, || {
        "half-turn closed form".into()
    })?;
    Ok(format!("{} hand-picked cases exact to 1e-12", cases.len()))
}

fn oracle_kernel(
    k: &KernelParams,
    space: Option<&ParameterSpace>,
    a: &OracleInput,
    b: &OracleInput,
) -> f64 {
    let d = match (k, a, b) {
        (KernelParams::Arc(p), OracleInput::Cond(x), OracleInput::Cond(y)) => {
            let s = space.unwrap();
            euclid(
                &oracle_embed(s, &p.omega, &p.rho, x),
                &oracle_embed(s, &p.omega, &p.rho, y),
            )
        }
        (KernelParams::Plain(p), OracleInput::Dense(x), OracleInput::Dense(y)) => x
            .iter()
            .zip(y)
            .zip(&p.omega)
            .map(|((u, v), w)| (w * (u - v)).powi(2))
            .sum::<f64>()
            .sqrt(),
        _ => unreachable!(),
    };
    oracle_kappa(k.base(), d, k.amplitude())
}

enum OracleInput {
    Cond(Point),
    Dense(Vec<f64>),
}

fn gp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let n = rng.random_range(1..=20);
        let base = random_base(&mut rng);
        let plain = inst % 4 == 3;
        let space = random_space(&mut rng, 6);
        let (kernel, train, test): (KernelParams, Vec<OracleInput>, Vec<OracleInput>) = if plain {
            let d = rng.random_range(1..=6);
            let pp = PlainParams::new(
                (0..d).map(|_| rng.random_range(0.1..4.0)).collect(),
                rng.random_range(0.2..3.0),
                base,
            )
            .unwrap();
            let mut draw = |m: usize| -> Vec<OracleInput> {
                (0..m)
                    .map(|_| OracleInput::Dense((0..d).map(|_| rng.random()).collect()))
                    .collect()
            };
            let (a, b) = (draw(n), draw(5));
            (KernelParams::Plain(pp), a, b)
        } else {
            let ap = random_params(space.len(), base, &mut rng);
            let train = (0..n)
                .map(|_| OracleInput::Cond(random_point(&space, &mut rng)))
                .collect();
            let test = (0..5)
                .map(|_| OracleInput::Cond(random_point(&space, &mut rng)))
                .collect();
            (KernelParams::Arc(ap), train, test)
        };
        let to_input = |o: &OracleInput| match o {
            OracleInput::Cond(p) => KernelInput::conditional(&space, p),
            OracleInput::Dense(v) => KernelInput::dense(v.clone()),
        };
        let warp = if inst % 2 == 0 {
            Warp::Identity
        } else {
            Warp::Log
        };
        let raw: Vec<f64> = (0..n)
            .map(|_| match warp {
                Warp::Identity => rng.random_range(-2.0..2.0),
                Warp::Log => rng.random_range(0.05..5.0),
            })
            .collect();
        let noise = rng.random_range(0.01..0.5);
        let mean_const = if inst % 3 == 0 {
            Some(rng.random_range(-1.0..1.0))
        } else {
            None
        };
        let inputs: Vec<KernelInput> = train.iter().map(to_input).collect();
        let model = GpModel::fit(&kernel, &inputs, &raw, noise, mean_const, warp).unwrap();

        // dense oracle: explicit inverse via LU, determinant via LU
        let y: Vec<f64> = match warp {
            Warp::Identity => raw.clone(),
            Warp::Log => raw.iter().map(|v| v.ln()).collect(),
        };
        let m = mean_const.unwrap_or(y.iter().sum::<f64>() / n as f64);
        let sp = Some(&space);
        let a = DMatrix::from_fn(n, n, |i, j| {
            oracle_kernel(&kernel, sp, &train[i], &train[j])
                + if i == j { noise + model.jitter() } else { 0.0 }
        });
        let lu = a.clone().lu();
        let r = DVector::from_iterator(n, y.iter().map(|v| v - m));
        let a_inv_r = lu.solve(&r).unwrap();
        let log_det = lu.determinant().ln();
        let jac: f64 = match warp {
            Warp::Identity => 0.0,
            Warp::Log => -raw.iter().map(|v| v.ln()).sum::<f64>(),
        };
        let lml = -0.5 * r.dot(&a_inv_r) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln() + jac;
        let got = model.log_marginal_likelihood();
        worst = worst.max((got - lml).abs() / lml.abs().max(1.0));
        for t in &test {
            let ks =
                DVector::from_iterator(n, train.iter().map(|x| oracle_kernel(&kernel, sp, t, x)));
            let mean = m + ks.dot(&a_inv_r);
            let var = kernel.amplitude() - ks.dot(&lu.solve(&ks).unwrap());
            let (gm, gv) = model.predict(&to_input(t)).unwrap();
            worst = worst.max((gm - mean).abs() / mean.abs().max(1.0));
            worst = worst.max((gv - var.max(0.0)).abs());
        }
    }
    ensure(worst <= 1e-8, || {
        format!("max deviation from dense oracle {worst:e}")
    })?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

fn ei_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_z: f64 = 0.0;
    for _ in 0..100 {
        let mean = rng.random_range(-1.0..1.0);
        let var = rng.random_range(0.01..4.0);
        let inc = rng.random_range(-1.0..1.0);
        let sd = f64::sqrt(var);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let imp = (inc - (mean + sd * z)).max(0.0);
            s1 += imp;
            s2 += imp * imp;
        }
        let mc = s1 / n as f64;
        let se = ((s2 / n as f64 - mc * mc) / n as f64).sqrt();
        let ei = expected_improvement(mean, var, inc);
        let zscore = (ei - mc).abs() / se;
        worst_z = worst_z.max(zscore);
        ensure(zscore <= 3.0, || {
            format!("EI {ei} vs MC {mc} ± {se} (μ={mean}, σ²={var}, best={inc})")
        })?;
    }
    Ok(format!(
        "100 triples, worst deviation {worst_z:.2} standard errors"
    ))
}

fn slice_calibration() -> Outcome {
    let start = Instant::now();
    let lp = |x: &[f64]| -0.5 * x[0] * x[0];
    let mut state = HyperState::new(vec![0.0], 0.0, 5);
    for _ in 0..1000 {
        state = slice_step(state, 0, lp, 1.0, 10);
    }
    let mut xs = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        state = slice_step(state, 0, lp, 1.0, 10);
        xs.push(state.x[0]);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    ensure(mean.abs() <= 0.05, || format!("mean {mean}"))?;
    ensure((0.9..=1.1).contains(&var), || format!("variance {var}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("mean {mean:.4}, variance {var:.4}"))
}

fn regression_config() -> ExperimentConfig {
    ExperimentConfig {
        models: ModelKind::ALL.to_vec(),
        folds: 10,
        seeds: vec![0],
        n_points: 300,
        mcmc: McmcSettings {
            n_samples: 5,
            burn_in: 20,
            thin: 2,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn bo_config() -> ExperimentConfig {
    ExperimentConfig {
        seeds: (0..20).collect(),
        budget: 50,
        init_count: 10,
        ..Default::default()
    }
}

fn regression_ordering(res: &RegressionResult, elapsed: Duration) -> Outcome {
    let s = |m| res.summary_for(m).unwrap();
    let (arc, fill, lin) = (
        s(ModelKind::ArcGp),
        s(ModelKind::PlainGpRandomFill),
        s(ModelKind::LinearRegression),
    );
    let (sep_a, sep_p) = (s(ModelKind::ArcGpSeparate), s(ModelKind::PlainGpSeparate));
    ensure(arc.mean < fill.mean, || {
        format!("arc {} !< random fill {}", arc.mean, fill.mean)
    })?;
    ensure(arc.mean < lin.mean, || {
        format!("arc {} !< linear {}", arc.mean, lin.mean)
    })?;
    let pooled = ((sep_a.sd.powi(2) + sep_p.sd.powi(2)) / 2.0).sqrt();
    ensure((sep_a.mean - sep_p.mean).abs() <= pooled, || {
        format!(
            "separate models differ by {} > pooled sd {pooled}",
            (sep_a.mean - sep_p.mean).abs()
        )
    })?;
    within(elapsed, 300)?;
    Ok(format!(
        "NMSE arc {:.4} < fill {:.4}, linear {:.4}; separate arc {:.4} vs plain {:.4} (pooled sd {:.4}); {:.0}s",
        arc.mean,
        fill.mean,
        lin.mean,
        sep_a.mean,
        sep_p.mean,
        pooled,
        elapsed.as_secs_f64()
    ))
}

fn bo_ordering(res: &BoResult, elapsed: Duration) -> Outcome {
    let med = |a| res.median_final_incumbent(a).unwrap();
    let (arc, fill, rs) = (
        med(BoArm::ArcGp),
        med(BoArm::PlainGpRandomFill),
        med(BoArm::RandomSearch),
    );
    ensure(arc <= fill, || {
        format!("arc median {arc} > random-fill {fill}")
    })?;
    ensure(arc <= rs && fill <= rs, || {
        format!("random search {rs} beats a model ({arc}, {fill})")
    })?;
    let (deep_arc, deep_fill) = (
        res.deep_fraction(BoArm::ArcGp, 3),
        res.deep_fraction(BoArm::PlainGpRandomFill, 3),
    );
    ensure(deep_arc > deep_fill, || {
        format!("depth>=3 fraction arc {deep_arc} <= fill {deep_fill}")
    })?;
    within(elapsed, 600)?;
    Ok(format!(
        "median final arc {arc:.4} <= fill {fill:.4} <= random {rs:.4}; depth>=3 share {deep_arc:.3} vs {deep_fill:.3}; {:.0}s",
        elapsed.as_secs_f64()
    ))
}

fn regression_csv(res: &RegressionResult) -> Vec<u8> {
    let mut b = Vec::new();
    res.write_csv(&mut b).unwrap();
    b
}

fn bo_csvs(res: &BoResult) -> (Vec<u8>, Vec<u8>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    res.write_trajectories_csv(&mut a).unwrap();
    res.write_architectures_csv(&mut b).unwrap();
    (a, b)
}

fn determinism(reg: &RegressionResult, bo: &BoResult) -> Outcome {
    let reg2 = run_regression_experiment(&regression_config()).map_err(|e| e.to_string())?;
    ensure(regression_csv(reg) == regression_csv(&reg2), || {
        "nmse.csv differs on rerun".into()
    })?;
    let bo2 = run_bo_experiment(&bo_config()).map_err(|e| e.to_string())?;
    ensure(bo_csvs(bo) == bo_csvs(&bo2), || {
        "trajectory/architecture CSVs differ on rerun".into()
    })?;
    // the optimization history of a single run, too
    let obj = SyntheticObjective::bundled();
    let history = |seed| {
        let h = arcbo::bo::run_loop(
            obj.space(),
            |p| arcbo::bench::eval_synthetic(&obj, p),
            15,
            5,
            seed,
            arcbo::bo::BoSettings {
                grid_size: 500,
                ..Default::default()
            },
        )
        .unwrap();
        let mut b = Vec::new();
        arcbo::bo::write_history_csv(obj.space(), &h, &mut b).unwrap();
        b
    };
    ensure(history(9) == history(9), || {
        "history CSV differs on rerun".into()
    })?;
    Ok("nmse, trajectories, architectures and history CSVs byte-identical on rerun".into())
}

fn report(id: usize, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("criterion {id} [{name}]: PASS - {detail}");
            true
        }
        Err(why) => {
            println!("criterion {id} [{name}]: FAIL - {why}");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report(1, "kernel correctness", &kernel_correctness());
    ok &= report(2, "distance case table", &case_table());
    ok &= report(3, "GP dense-oracle equivalence", &gp_oracle());
    ok &= report(4, "EI Monte Carlo oracle", &ei_oracle());
    ok &= report(5, "slice sampler calibration", &slice_calibration());

    let start = Instant::now();
    let reg = run_regression_experiment(&regression_config());
    let reg_time = start.elapsed();
    let start = Instant::now();
    let bo = run_bo_experiment(&bo_config());
    let bo_time = start.elapsed();
    match (&reg, &bo) {
        (Ok(reg), Ok(bo)) => {
            ok &= report(
                6,
                "regression ordering",
                &regression_ordering(reg, reg_time),
            );
            ok &= report(7, "optimization ordering", &bo_ordering(bo, bo_time));
            ok &= report(8, "determinism", &determinism(reg, bo));
        }
        _ => {
            let why = format!(
                "experiment failed: {:?} / {:?}",
                reg.as_ref().err(),
                bo.as_ref().err()
            );
            for (id, name) in [
                (6, "regression ordering"),
                (7, "optimization ordering"),
                (8, "determinism"),
            ] {
                ok &= report(id, name, &Err(why.clone()));
            }
        }
    }
    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
