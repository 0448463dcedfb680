use std::sync::Arc;

use mfpo::exec::{set_execution, Execution};
use mfpo::model::{portfolio_model, Dims, HiddenLaw, ModelSpec, PortfolioParams};
use mfpo::simkit::{
    bootstrap_criterion, bootstrap_difference, evaluate_policy_cost, mean_variance_criterion, simulate_batch, Strategy,
};

fn unit_step() -> PortfolioParams {
    PortfolioParams {
        dt: 1.0,
        ..PortfolioParams::default()
    }
}

fn noiseless(drift: f64, horizon: usize) -> ModelSpec {
    let dims = Dims {
        hidden: 1,
        obs: 1,
        control: 1,
    };
    ModelSpec::builder(dims, horizon, vec![vec![1.0]])
        .hidden_step(Arc::new(move |_, x: &[f64], _: &HiddenLaw, a: &[f64], _: &[f64]| {
            vec![x[0] + a[0] * drift]
        }))
        .obs_step(Arc::new(|_, x1: &[f64], _: &[f64], _: &[f64], _: &[f64]| x1.to_vec()))
        .noises(
            Arc::new(|_: &mut dyn rand::RngCore| vec![0.0]),
            Arc::new(|_: &mut dyn rand::RngCore| vec![0.0]),
        )
        .initial_sampler(Arc::new(|_: &mut dyn rand::RngCore| (vec![1.0], vec![1.0])))
        .mean_variance(2.0)
        .build()
        .unwrap()
}

#[test]
fn unit_allocation_has_the_exact_mean() {
    let model = portfolio_model(&unit_step()).unwrap();
    let r = simulate_batch(&model, &Strategy::Constant(vec![1.0]), 100_000, 11).unwrap();
    // Additive increments: mean 1 + 5 * 0.02, variance 5 * 0.05^2.
    let se = (5.0 * 0.0025f64 / 1e5).sqrt();
    assert!((r.mean_terminal[0] - 1.10).abs() < 3.0 * se, "{}", r.mean_terminal[0]);
    assert!((r.var_terminal[0] / 0.0125 - 1.0).abs() < 0.03);
}

#[test]
fn zero_allocation_keeps_initial_wealth() {
    let model = portfolio_model(&unit_step()).unwrap();
    let r = simulate_batch(&model, &Strategy::Constant(vec![0.0]), 50, 1).unwrap();
    assert!(r.terminal.iter().all(|x| x[0] == 1.0));
    assert_eq!(r.var_terminal[0], 0.0);
    assert_eq!(r.criterion, Some(-1.0));
}

#[test]
fn buy_and_hold_on_a_noiseless_model_is_deterministic() {
    let model = noiseless(0.02, 5);
    for strategy in [Strategy::BuyAndHold, Strategy::Trending] {
        let r = simulate_batch(&model, &strategy, 20, 5).unwrap();
        for x in &r.terminal {
            assert!((x[0] - 1.10).abs() < 1e-14);
        }
        assert!(r.var_terminal[0] < 1e-28);
    }
}

#[test]
fn trending_flips_with_observed_moves() {
    let model = noiseless(0.0, 2);
    let st = mfpo::simkit::BatchStats {
        mean_x: nalgebra::DVector::zeros(1),
        cov_x: nalgebra::DMatrix::zeros(1, 1),
        mean_xy: nalgebra::DVector::zeros(2),
    };
    let ys = [vec![1.0], vec![0.9], vec![1.1]];
    let controls: Vec<f64> = (0..3)
        .map(|k| Strategy::Trending.decide(&model, k, &ys[..=k], &st).unwrap()[0])
        .collect();
    assert_eq!(controls, vec![1.0, -1.0, 1.0]);
}

#[test]
fn criterion_identity_is_exact() {
    for gamma in [2.0, 4.0, 8.0, 16.0] {
        let params = PortfolioParams {
            risk_aversion: gamma,
            ..PortfolioParams::default()
        };
        let model = portfolio_model(&params).unwrap();
        for strategy in [Strategy::BuyAndHold, Strategy::Trending] {
            let r = simulate_batch(&model, &strategy, 250, 9).unwrap();
            let xs: Vec<f64> = r.terminal.iter().map(|x| x[0]).collect();
            assert_eq!(
                r.criterion.unwrap(),
                0.5 * gamma * r.var_terminal[0] - r.mean_terminal[0]
            );
            assert!((mean_variance_criterion(&xs, gamma) - r.criterion.unwrap()).abs() < 1e-15);
        }
    }
    // A published row: mean 1.02027868 and variance 0.00481573 at gamma 2.
    let v: f64 = 0.5 * 2.0 * 0.00481573 - 1.02027868;
    assert!((v + 1.01546295).abs() < 1e-12);
}

#[test]
fn batches_are_reproducible_across_execution_modes() {
    let model = portfolio_model(&PortfolioParams::default()).unwrap();
    let a = simulate_batch(&model, &Strategy::Trending, 3000, 77).unwrap();
    let b = simulate_batch(&model, &Strategy::Trending, 3000, 77).unwrap();
    assert_eq!(a, b);
    set_execution(Execution::Sequential);
    let c = simulate_batch(&model, &Strategy::Trending, 3000, 77).unwrap();
    set_execution(Execution::Parallel);
    assert_eq!(a, c);
    let d = simulate_batch(&model, &Strategy::Trending, 3000, 78).unwrap();
    assert_ne!(a.terminal, d.terminal);
}

#[test]
fn standard_error_scales_with_root_n() {
    let model = portfolio_model(&unit_step()).unwrap();
    let small = evaluate_policy_cost(&model, &Strategy::BuyAndHold, 20_000, 3, 0).unwrap();
    let large = evaluate_policy_cost(&model, &Strategy::BuyAndHold, 40_000, 4, 0).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn zero_costs_give_zero_with_zero_error() {
    let dims = Dims {
        hidden: 1,
        obs: 1,
        control: 1,
    };
    let model = ModelSpec::builder(dims, 3, vec![vec![0.0]])
        .hidden_step(Arc::new(|_, x: &[f64], _: &HiddenLaw, _: &[f64], e: &[f64]| {
            vec![x[0] + e[0]]
        }))
        .obs_step(Arc::new(|_, x1: &[f64], _: &[f64], _: &[f64], e: &[f64]| {
            vec![x1[0] + e[0]]
        }))
        .noises(
            Arc::new(|_: &mut dyn rand::RngCore| vec![0.3]),
            Arc::new(|_: &mut dyn rand::RngCore| vec![0.1]),
        )
        .initial_sampler(Arc::new(|_: &mut dyn rand::RngCore| (vec![0.0], vec![0.0])))
        .build()
        .unwrap();
    let c = evaluate_policy_cost(&model, &Strategy::Constant(vec![0.0]), 100, 1, 0).unwrap();
    assert_eq!((c.estimate, c.std_error), (0.0, 0.0));
}

#[test]
fn bootstrap_reports_criterion_spread() {
    let model = portfolio_model(&PortfolioParams::default()).unwrap();
    let r = simulate_batch(&model, &Strategy::BuyAndHold, 250, 2).unwrap();
    let xs: Vec<f64> = r.terminal.iter().map(|x| x[0]).collect();
    let b = bootstrap_criterion(&xs, 2.0, 200, 2);
    assert_eq!(b.estimate, r.criterion.unwrap());
    assert!(b.se > 0.0 && b.interval.0 < b.estimate && b.estimate < b.interval.1);
    let self_diff = bootstrap_difference(&xs, &xs, 2.0, 50, 1).unwrap();
    assert_eq!((self_diff.estimate, self_diff.se), (0.0, 0.0));
    assert!(bootstrap_difference(&xs, &xs[1..], 2.0, 5, 1).is_err());
}
