//! End-to-end smoke suite over the closed-form identities: every check here
//! has an exact expected value, so a fresh checkout either passes all of them
//! or something fundamental is broken.

use brca_core::coeffgen::{AmplitudeLaw, NoiseSampler, OperatorSampler};
use brca_core::estimate::{bartlett_weight, CovOperator};
use brca_core::funspace::{Grid, GridFunction, LinearOp, NormKind};
use brca_core::martingale::{decompose, neumann_inverse, telescoping_residual, NeumannConfig};
use brca_core::process::{
    series_tail_bound, simulate_recursive, BrcaModel, SimConfig,
};
use brca_core::rng;
use brca_core::verify::{complete_convergence_experiment, ks_statistic, CompleteConfig};

type Check = (&'static str, fn() -> Result<(), String>);

fn ok(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ok((a - b).abs() <= tol, &format!("{what}: {a} vs {b}"))
}

fn midpoint_grid() -> Result<(), String> {
    let g = Grid::uniform(2).map_err(|e| e.to_string())?;
    close(g.points()[0], 0.25, 1e-15, "first midpoint")?;
    close(g.weights().iter().sum::<f64>(), 1.0, 1e-12, "weight sum")
}

fn unit_constant_norm() -> Result<(), String> {
    let g = Grid::uniform(16).unwrap();
    close(
        GridFunction::constant(g, 1.0).norm(NormKind::L2),
        1.0,
        1e-14,
        "constant norm",
    )
}

fn constant_kernel_integrates() -> Result<(), String> {
    let g = Grid::uniform(8).unwrap();
    let a = LinearOp::from_fn(g.clone(), |_, _| 1.0);
    let image = a.apply(&GridFunction::constant(g, 1.0)).unwrap();
    close(image.values()[3], 1.0, 1e-13, "constant kernel on constant")
}

fn identity_is_neutral() -> Result<(), String> {
    let g = Grid::uniform(6).unwrap();
    let id = LinearOp::identity(g.clone());
    let a = LinearOp::from_fn(g, |t, s| (t + s).cos());
    let comp = a.compose(&id).unwrap();
    let gap = comp
        .sub(&a)
        .unwrap()
        .norm(NormKind::L2);
    ok(gap < 1e-12, &format!("identity composition gap {gap}"))
}

fn scaled_identity_norm() -> Result<(), String> {
    let g = Grid::uniform(5).unwrap();
    close(
        LinearOp::scaled_identity(g, -0.7).norm(NormKind::L2),
        0.7,
        1e-12,
        "scaled identity norm",
    )
}

fn degenerate_samplers() -> Result<(), String> {
    let g = Grid::uniform(3).unwrap();
    let zero = OperatorSampler::fixed(LinearOp::zero(g.clone()));
    let mut stream = rng::stream(1, rng::TAG_OPERATOR);
    ok(
        zero.sample(&mut stream).norm(NormKind::L2) == 0.0,
        "zero sampler draw",
    )?;
    let a = LinearOp::scaled_identity(g.clone(), 0.2);
    let b = LinearOp::scaled_identity(g.clone(), 0.9);
    let regime = OperatorSampler::two_regime(a, b, 1.0).map_err(|e| e.to_string())?;
    close(
        regime.sample(&mut stream).norm(NormKind::L2),
        0.2,
        1e-12,
        "degenerate regime draw",
    )?;
    let noise = NoiseSampler::iid_gaussian(g, 0.0).map_err(|e| e.to_string())?;
    let mut nstream = rng::stream(1, rng::TAG_NOISE);
    ok(
        noise.sample(&mut nstream).norm(NormKind::Sup) == 0.0,
        "sigma zero noise",
    )
}

fn recursion_collapses_without_coefficient() -> Result<(), String> {
    let g = Grid::uniform(4).unwrap();
    let model = BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::zero(g.clone())),
        NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
    )
    .unwrap();
    let traj = simulate_recursive(&model, &SimConfig::new(20, 3).recording()).unwrap();
    let eps = traj.eps_draws().unwrap();
    for i in 1..=20usize {
        let gap = traj
            .centered(i)
            .sub(&eps[i - 1])
            .unwrap()
            .norm(NormKind::Sup);
        if gap > 1e-13 {
            return Err(format!("state {i} differs from its innovation by {gap}"));
        }
    }
    Ok(())
}

fn reproducible_paths() -> Result<(), String> {
    let g = Grid::uniform(3).unwrap();
    let model = BrcaModel::centered(
        g.clone(),
        OperatorSampler::random_kernel(
            LinearOp::identity(g.clone()),
            AmplitudeLaw::uniform(0.0, 0.5).unwrap(),
        ),
        NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
    )
    .unwrap();
    let a = simulate_recursive(&model, &SimConfig::new(32, 9)).unwrap();
    let b = simulate_recursive(&model, &SimConfig::new(32, 9)).unwrap();
    for i in 0..=32 {
        if a.state(i).values() != b.state(i).values() {
            return Err(format!("state {i} differs across identical seeds"));
        }
    }
    Ok(())
}

fn geometric_tail_bound() -> Result<(), String> {
    let g = Grid::uniform(2).unwrap();
    let model = BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.5)),
        NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
    )
    .unwrap();
    close(
        series_tail_bound(&model, 10, 1.0).map_err(|e| e.to_string())?,
        0.5f64.powi(10),
        1e-12,
        "tail bound",
    )?;
    let b5 = series_tail_bound(&model, 5, 1.0).unwrap();
    let b9 = series_tail_bound(&model, 9, 1.0).unwrap();
    ok(b9 < b5, "tail bound monotone")
}

fn neumann_closed_forms() -> Result<(), String> {
    let g = Grid::uniform(4).unwrap();
    let r = neumann_inverse(&LinearOp::zero(g.clone()), &NeumannConfig::default())
        .map_err(|e| e.to_string())?;
    let gap = r
        .sub(&LinearOp::identity(g.clone()))
        .unwrap()
        .norm(NormKind::L2);
    ok(gap < 1e-12, &format!("resolvent of zero: gap {gap}"))?;
    let r = neumann_inverse(
        &LinearOp::scaled_identity(g.clone(), 0.5),
        &NeumannConfig::default(),
    )
    .unwrap();
    let gap = r
        .sub(&LinearOp::scaled_identity(g, 2.0))
        .unwrap()
        .norm(NormKind::L2);
    ok(gap < 1e-9, &format!("geometric resolvent: gap {gap}"))
}

fn decomposition_identities() -> Result<(), String> {
    let g = Grid::uniform(3).unwrap();
    let model = BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::zero(g.clone())),
        NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
    )
    .unwrap();
    let traj = simulate_recursive(&model, &SimConfig::new(50, 7)).unwrap();
    let cob = decompose(&traj, &LinearOp::zero(g), &NeumannConfig::default())
        .map_err(|e| e.to_string())?;
    let res = telescoping_residual(&traj, &cob);
    ok(res < 1e-12, &format!("telescoping residual {res}"))
}

fn triangular_weights() -> Result<(), String> {
    close(bartlett_weight(0, 2), 1.0, 0.0, "weight at lag 0")?;
    close(bartlett_weight(1, 2), 0.5, 0.0, "weight at lag 1")?;
    close(bartlett_weight(-1, 2), 0.5, 0.0, "weight at lag -1")
}

fn nuclear_norm_facts() -> Result<(), String> {
    let g = Grid::uniform(6).unwrap();
    ok(
        CovOperator::zero(g.clone()).nuclear_norm() == 0.0,
        "zero operator nuclear norm",
    )?;
    let f = GridFunction::from_fn(g, |t| 1.0 + t);
    let rank_one = CovOperator::outer(&f, &f).unwrap();
    close(
        rank_one.nuclear_norm(),
        f.norm(NormKind::L2).powi(2),
        1e-12,
        "rank one nuclear norm",
    )
}

fn ks_endpoints() -> Result<(), String> {
    let r = ks_statistic(&[0.0], |_| 0.5, "median").map_err(|e| e.to_string())?;
    close(r.statistic, 0.5, 0.0, "single point at median")?;
    let far = ks_statistic(&[50.0; 20], |_| 0.0, "degenerate").unwrap();
    close(far.statistic, 1.0, 0.0, "mass far in the tail")?;
    let uniform: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
    let exact = ks_statistic(&uniform, |x| x.clamp(0.0, 1.0), "uniform").unwrap();
    ok(
        exact.statistic <= 0.005 + 1e-12,
        &format!("uniform quantiles score {}", exact.statistic),
    )
}

fn complete_preconditions() -> Result<(), String> {
    let g = Grid::uniform(1).unwrap();
    let model = BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::zero(g.clone())),
        NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
    )
    .unwrap();
    let bad = CompleteConfig::new(1.0, 1.0, 1.0, 64, 100, 1);
    ok(
        complete_convergence_experiment(&model, &bad).is_err(),
        "p = 1 must be rejected",
    )
}

pub fn run_selftest() -> i32 {
    let checks: Vec<Check> = vec![
        ("midpoint grid", midpoint_grid),
        ("unit constant norm", unit_constant_norm),
        ("constant kernel integrates to one", constant_kernel_integrates),
        ("identity operator is neutral", identity_is_neutral),
        ("scaled identity norm", scaled_identity_norm),
        ("degenerate samplers", degenerate_samplers),
        ("zero-coefficient recursion collapses", recursion_collapses_without_coefficient),
        ("identical seeds reproduce paths", reproducible_paths),
        ("geometric tail bound", geometric_tail_bound),
        ("resolvent closed forms", neumann_closed_forms),
        ("decomposition identities", decomposition_identities),
        ("triangular lag weights", triangular_weights),
        ("nuclear norm closed forms", nuclear_norm_facts),
        ("KS statistic endpoints", ks_endpoints),
        ("complete-convergence preconditions", complete_preconditions),
    ];
    let mut failures = 0usize;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest {name}: PASS"),
            Err(msg) => {
                println!("selftest {name}: FAIL ({msg})");
                failures += 1;
            }
        }
    }
    if failures == 0 {
        println!("selftest: all checks passed");
        0
    } else {
        println!("selftest: {failures} check(s) failed");
        2
    }
}
