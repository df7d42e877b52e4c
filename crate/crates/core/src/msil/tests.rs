use super::*;
use crate::env::{generate_problem, Config, ProblemOptions, RobotKind};
use crate::guidance::{sample_projected, Hyper};
use crate::rng::rng_from_seed;
use crate::tree::{test_util::open_problem, tsa_plan, SearchTree};

/// Value = distance to a fixed point, policy = halfway towards it.
struct Beacon {
    target: Config,
    sigma: f64,
}

impl Guide for Beacon {
    fn evaluate(&self, s: &Config) -> (f64, Config) {
        (s.dist(&self.target), s.lerp(&self.target, 0.5))
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn beacon() -> Beacon {
    Beacon {
        target: Config::new(vec![0.9, 0.9]),
        sigma: 0.05,
    }
}

/// Dense kernel-smoothing score, straight from the definition.
fn ks_oracle(points: &[Config], rewards: &[f64], h: f64, lambda: f64, s: &Config) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let k = |a: &Config, b: &Config| (-a.dist_sq(b) / (2.0 * h * h)).exp();
    let w: f64 = points.iter().map(|p| k(p, s)).sum();
    let wr: f64 = points.iter().zip(rewards).map(|(p, r)| k(p, s) * r).sum();
    let mut total = 0.0;
    for a in points {
        for b in points {
            total += k(a, b);
        }
    }
    let w = w.max(1e-8);
    wr / w + lambda * (f64::ln(total).max(0.0) / w).sqrt()
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

fn five_node_tree() -> SearchTree {
    let mut t = SearchTree::new(Config::new(vec![0.1, 0.1]));
    t.add(Config::new(vec![0.2, 0.15]), 0, 0.1);
    t.add(Config::new(vec![0.3, 0.3]), 1, 0.2);
    t.add(Config::new(vec![0.15, 0.35]), 0, 0.3);
    t.add(Config::new(vec![0.45, 0.3]), 2, 0.4);
    t
}

#[test]
fn single_node_tree_selects_root() {
    let t = SearchTree::new(Config::new(vec![0.5, 0.5]));
    let mut hist = UcbSettings::ks().history();
    hist.update(Config::new(vec![0.9, 0.9]), 5.0).unwrap();
    let mut rng = rng_from_seed(1);
    let (parent, _) = next_expand(&t, &beacon(), &mut hist, 3, 0.15, &mut rng);
    assert_eq!(parent, 0);
    assert_eq!(hist.len(), 2);
}

#[test]
fn one_candidate_is_taken() {
    let t = five_node_tree();
    let g = beacon();
    let mut hist = UcbSettings::ks().history();
    let mut rng = rng_from_seed(2);
    let mut probe = rng.clone();
    let (parent, s_new) = next_expand(&t, &g, &mut hist, 1, 0.15, &mut rng);
    let (_, mean) = g.evaluate(t.config(parent));
    let expect = sample_projected(&mean, t.config(parent), g.sigma, 1, 0.15, &mut probe);
    assert_eq!(s_new, expect[0]);
}

#[test]
fn selections_match_exhaustive_scoring() {
    let g = beacon();
    let (h, lambda) = (0.1, 0.7);
    let mut t = five_node_tree();
    let mut ex = NextExpander::new(&g, UcbSettings { lambda, ..UcbSettings::ks() }.history(), 3, 0.15);
    let (mut points, mut rewards) = (Vec::new(), Vec::new());
    let mut rng = rng_from_seed(3);
    for step in 0..40 {
        let mut probe = rng.clone();
        let (parent, s_new) = ex.step(&t, &mut rng);

        let node_scores: Vec<f64> = t
            .nodes()
            .iter()
            .map(|n| ks_oracle(&points, &rewards, h, lambda, &n.config))
            .collect();
        assert_eq!(parent, argmax(&node_scores), "step {step}");

        let s_parent = t.config(parent).clone();
        let (v, mean) = g.evaluate(&s_parent);
        points.push(s_parent.clone());
        rewards.push(-v);
        let cands = sample_projected(&mean, &s_parent, g.sigma, 3, 0.15, &mut probe);
        let cand_scores: Vec<f64> = cands.iter().map(|c| ks_oracle(&points, &rewards, h, lambda, c)).collect();
        assert_eq!(s_new, cands[argmax(&cand_scores)], "step {step}");

        let cost = t.node(parent).cost + s_parent.dist(&s_new);
        t.add(s_new, parent, cost);
    }
}

#[test]
fn gp_selection_matches_fresh_scoring() {
    let g = beacon();
    let mut t = five_node_tree();
    let mut ex = NextExpander::new(&g, UcbSettings::gp().history(), 4, 0.15);
    let mut rng = rng_from_seed(4);
    for _ in 0..30 {
        let before = ex.history().clone();
        let (parent, s_new) = ex.step(&t, &mut rng);
        let scores: Vec<f64> = t.nodes().iter().map(|n| before.score(&n.config)).collect();
        assert_eq!(parent, argmax(&scores));
        t.add(s_new, parent, 0.0);
    }
}

fn goal_problem() -> crate::env::PlanningProblem {
    open_problem(vec![0.1, 0.1], vec![0.8, 0.1])
}

#[test]
fn two_state_targets() {
    let p = goal_problem();
    let mut t = SearchTree::new(p.start.clone());
    let leaf = t.add(p.goal.clone(), 0, 0.7);
    let (path, y) = targets_from_tree(&t, leaf, &p).unwrap();
    assert_eq!(path.len(), 2);
    assert_eq!(y, vec![p.segment_cost(&p.start, &p.goal), 0.0]);
}

#[test]
fn four_state_targets_are_suffix_sums() {
    let p = goal_problem();
    let pts = [vec![0.3, 0.2], vec![0.5, 0.3], vec![0.81, 0.1]];
    let mut t = SearchTree::new(p.start.clone());
    let mut last = 0;
    for c in pts {
        last = t.add(Config::new(c), last, 0.0);
    }
    let (path, y) = targets_from_tree(&t, last, &p).unwrap();
    assert_eq!(path.len(), 4);
    for i in 0..4 {
        let direct: f64 = (i..3)
            .map(|l| {
                let (a, b) = (&path[l].0, &path[l + 1].0);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .sum();
        assert!((y[i] - direct).abs() < 1e-12);
        assert!(y[i] >= 0.0);
    }
    assert!(y.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn targets_need_goal_leaf() {
    let p = goal_problem();
    let mut t = SearchTree::new(p.start.clone());
    let leaf = t.add(Config::new(vec![0.3, 0.3]), 0, 0.1);
    assert!(matches!(targets_from_tree(&t, leaf, &p), Err(Error::InvalidArgument(_))));
}

fn mixed(eps: f64, g: &Beacon) -> MixedExpander<'_> {
    MixedExpander::new(eps, RrtExpander::default(), NextExpander::new(g, UcbSettings::ks().history(), 2, 0.15))
}

#[test]
fn half_mixture_frequency() {
    let g = beacon();
    let m = mixed(0.5, &g);
    let mut rng = rng_from_seed(5);
    let n = 10_000;
    let rrt = (0..n).filter(|_| m.pick(&mut rng) == ExpandSource::Rrt).count();
    let frac = rrt as f64 / n as f64;
    assert!((frac - 0.5).abs() < 0.02, "{frac}");
}

#[test]
fn endpoints_of_mixture_are_pure() {
    let g = beacon();
    let p = goal_problem();
    for (eps, want_rrt) in [(1.0, true), (0.0, false)] {
        let mut m = mixed(eps, &g);
        let t = SearchTree::new(p.start.clone());
        let mut rng = rng_from_seed(6);
        for _ in 0..50 {
            crate::tree::Expander::expand(&mut m, &t, &p, &mut rng);
        }
        assert_eq!(m.rrt_count == 50, want_rrt);
        assert_eq!(m.next_count == 50, !want_rrt);
    }
}

#[test]
fn full_mixture_replays_rrt_star() {
    let prob = generate_problem(RobotKind::Point2, 9, &ProblemOptions::for_robot(RobotKind::Point2)).unwrap();
    let g = beacon();
    let s = GuidedSettings {
        eps: 1.0,
        budget: 300,
        ..GuidedSettings::default()
    };
    let a = plan_guided(&prob, &g, &s, &mut rng_from_seed(7));
    let b = tsa_plan(
        &prob,
        &mut RrtExpander::default(),
        Some(&mut RrtStarRewire::default()),
        300,
        &mut rng_from_seed(7),
    );
    assert_eq!(a.tree, b.tree);
    assert_eq!(a.collision_checks, b.collision_checks);
}

#[test]
fn anneal_examples() {
    assert_eq!(anneal(1.0, 0.5), 0.5);
    assert!((anneal(0.1, 0.9) - 0.09).abs() < 1e-15);
    let mut e = 0.8;
    for n in 1..=50 {
        e = anneal(e, 0.93);
        assert!((e - 0.8 * 0.93f64.powi(n)).abs() < 1e-14);
    }
}

#[test]
fn piecewise_schedule_is_exact() {
    let s = EpsSchedule::piecewise(2000);
    s.validate().unwrap();
    for i in 0..3000 {
        let want = if i < 1000 {
            1.0
        } else if i < 2000 {
            0.5 - 0.1 * ((i - 1000) / 200) as f64
        } else {
            0.1
        };
        assert!((s.at(i, 0) - want).abs() < 1e-12, "problem {i}");
    }
}

#[test]
fn schedules_never_increase() {
    let scaled = EpsSchedule::piecewise(500);
    assert_eq!(scaled.at(249, 0), 1.0);
    assert_eq!(scaled.at(250, 0), 0.5);
    assert!((scaled.at(499, 0) - 0.1).abs() < 1e-12);
    let geo = EpsSchedule::Geometric { initial: 1.0, alpha: 0.9 };
    for s in [scaled, geo] {
        let v: Vec<f64> = (0..600).map(|i| s.at(i, i)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(EpsSchedule::Geometric { initial: 1.0, alpha: 1.0 }.validate().is_err());
    assert!(EpsSchedule::Piecewise(vec![(0, 0.2), (5, 0.4)]).validate().is_err());
    // short runs collapse steps onto the same problem but stay valid
    for total in [1, 3, 7, 12] {
        let s = EpsSchedule::piecewise(total);
        s.validate().unwrap();
        assert_eq!(s.at(0, 0), 1.0);
        assert_eq!(s.at(total, 0), 0.1);
    }
}

fn straight_experience(p: &Arc<crate::env::PlanningProblem>) -> Experience {
    let path = vec![p.start.clone(), p.start.lerp(&p.goal, 0.5), p.goal.clone()];
    let c = p.segment_cost(&path[0], &path[1]);
    let d = p.segment_cost(&path[1], &path[2]);
    Experience {
        path,
        targets: vec![c + d, d, 0.0],
        problem: p.clone(),
    }
}

#[test]
fn buffer_is_fifo_and_validates() {
    let p = Arc::new(goal_problem());
    let mut buf = ReplayBuffer::new(3);
    for i in 0..5 {
        let mut e = straight_experience(&p);
        e.targets[2] = 0.0;
        e.path[1].0[1] = 0.1 + 0.01 * i as f64;
        let c = p.segment_cost(&e.path[0], &e.path[1]);
        let d = p.segment_cost(&e.path[1], &e.path[2]);
        e.targets = vec![c + d, d, 0.0];
        buf.push(e).unwrap();
        assert!(buf.len() <= 3);
    }
    let ys: Vec<f64> = buf.entries().map(|e| e.path[1][1]).collect();
    assert!((ys[0] - 0.12).abs() < 1e-12 && (ys[2] - 0.14).abs() < 1e-12);

    let mut bad = straight_experience(&p);
    bad.targets[0] += 0.1;
    assert!(buf.push(bad).is_err());
    let mut short = straight_experience(&p);
    short.path.pop();
    short.targets.pop();
    assert!(buf.push(short).is_err());
    assert!(ReplayBuffer::new(2).sample(4, &mut rng_from_seed(0)).is_empty());
}

#[test]
fn optimizers_descend_a_quadratic() {
    let h = small_hyper();
    for kind in [OptimizerKind::sgd(), OptimizerKind::adam()] {
        let mut p = GuidanceParams::<f64>::init(h.clone(), 1).unwrap();
        let start: f64 = p.tensors().iter().map(|t| t.sum_sq()).sum();
        let mut opt = Optimizer::new(kind, 1e-2);
        for _ in 0..200 {
            // gradient of |W|^2
            let g: Vec<_> = p
                .tensors()
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.data.iter_mut().for_each(|v| *v *= 2.0);
                    t
                })
                .collect();
            opt.step(&mut p, &g);
        }
        let end: f64 = p.tensors().iter().map(|t| t.sum_sq()).sum();
        assert!(end < 0.1 * start, "{kind:?}: {start} -> {end}");
    }
}

fn small_hyper() -> Hyper {
    let mut h = Hyper::for_robot(RobotKind::Point2, 0.15);
    h.t_vi = 4;
    h.d_e = 8;
    h
}

fn toy_problems(n: u64) -> Vec<crate::env::PlanningProblem> {
    (0..n)
        .map(|i| generate_problem(RobotKind::Point2, 100 + i, &ProblemOptions::for_robot(RobotKind::Point2)).unwrap())
        .collect()
}

#[test]
fn zero_steps_leave_params_unchanged() {
    let params = GuidanceParams::<f32>::init(small_hyper(), 2).unwrap();
    let mut cfg = MsilConfig::new(4);
    cfg.steps_per_epoch = 0;
    cfg.schedule = EpsSchedule::Constant(0.5);
    cfg.planner.budget = 100;
    let out = train(&cfg, &toy_problems(2), params.clone(), None).unwrap();
    assert_eq!(out.params, params);
    assert!(out.log.iter().all(|r| r.loss.is_none()));
}

#[test]
fn overfits_a_frozen_buffer() {
    // fill a buffer with RRT* solutions, then fit it alone
    let problems = toy_problems(8);
    let mut cfg = MsilConfig::new(problems.len());
    cfg.steps_per_epoch = 0;
    cfg.schedule = EpsSchedule::Constant(1.0);
    cfg.planner.budget = 3000;
    let params = GuidanceParams::<f32>::init(small_hyper(), 3).unwrap();
    let out = train(&cfg, &problems, params, None).unwrap();
    assert!(out.buffer.len() >= 2);
    let batch: Vec<PathExample> = out.buffer.entries().map(|e| e.example()).collect();

    let mut params = out.params;
    let mut opt = Optimizer::new(OptimizerKind::adam(), 1e-3);
    let (l0, _) = loss_and_grad(&params, &batch, 0.0).unwrap();
    let steps = 10 * 50;
    for _ in 0..steps {
        let (_, g) = loss_and_grad(&params, &batch, 0.0).unwrap();
        opt.step(&mut params, &g);
    }
    let (l1, _) = loss_and_grad(&params, &batch, 0.0).unwrap();
    // the log-density constant does not depend on W
    let sigma = params.hyper().sigma_policy;
    let c: f64 = batch
        .iter()
        .map(|e| (e.path.len() - 1) as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln())
        .sum();
    assert!(l1 - c < 0.5 * (l0 - c), "loss {l0} -> {l1} (constant {c})");
}

#[test]
fn training_writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = MsilConfig::new(6);
    cfg.steps_per_epoch = 2;
    cfg.schedule = EpsSchedule::Geometric { initial: 1.0, alpha: 0.5 };
    cfg.planner.budget = 200;
    let params = GuidanceParams::<f32>::init(small_hyper(), 4).unwrap();
    let out = train(&cfg, &toy_problems(3), params, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], LOG_HEADER);
    assert_eq!(lines.len(), 7);
    assert!(dir.path().join("final.ckpt").exists());
    let eps: Vec<f64> = out.log.iter().map(|r| r.epsilon).collect();
    assert_eq!(eps, vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]);
    let back = crate::guidance::load_checkpoint(dir.path().join("final.ckpt")).unwrap();
    assert_eq!(back, out.params);
    for e in out.buffer.entries() {
        e.validate().unwrap();
    }
}

#[test]
fn training_is_deterministic() {
    let mut cfg = MsilConfig::new(5);
    cfg.steps_per_epoch = 2;
    cfg.schedule = EpsSchedule::Constant(0.5);
    cfg.planner.budget = 150;
    let p = GuidanceParams::<f32>::init(small_hyper(), 5).unwrap();
    let a = train(&cfg, &toy_problems(2), p.clone(), None).unwrap();
    let b = train(&cfg, &toy_problems(2), p, None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
}

#[test]
fn clipping_bounds_the_first_step() {
    let mut p = GuidanceParams::<f64>::init(small_hyper(), 6).unwrap();
    let before = p.clone();
    let g: Vec<_> = p.tensors().iter().map(|t| t.clone()).collect();
    let mut opt = Optimizer::new(OptimizerKind::sgd(), 1.0);
    opt.clip_norm = Some(1e-3);
    opt.step(&mut p, &g);
    let moved: f64 = p
        .tensors()
        .iter()
        .zip(before.tensors())
        .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt();
    assert!((moved - 1e-3).abs() < 1e-12, "{moved}");
}
