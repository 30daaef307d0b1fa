//! Scratch calibration runs for the trained-model benchmarks.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use seqdenoise::bench::evenpixels::EvenPixelsImage;
use seqdenoise::bench::sudoku::{self, Difficulty, SudokuGrid};
use seqdenoise::denoiser::{train, Corpus, Denoiser, ExactDenoiser, NetDenoiser, NetParams, NetShape, TrainConfig};
use seqdenoise::policy::{plan_schedule, run_inference, InferenceConfig, OrderPolicy};
use seqdenoise::process::{StepSpec, VarianceMode};
use seqdenoise::schedule::NoiseSchedule;
use seqdenoise::tsampler::{estimate_loss_weights, LevelSampler, LossWeightTable};
use seqdenoise::types::VariableSet;

fn split_solutions(seed: u64) -> (Vec<SudokuGrid>, Vec<SudokuGrid>) {
    let mut all = sudoku::enumerate_solutions(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let test = all.split_off(200);
    (all, test)
}

fn train_sudoku(sampler: &LevelSampler, steps: usize, hidden: usize, out: &str, lambda: f64, batch: usize) {
    let (train_grids, _) = split_solutions(7);
    let data: Vec<VariableSet> = train_grids.iter().map(|g| sudoku::encode(g).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let weights = match sampler {
        LevelSampler::UniformT => LossWeightTable::flat(64),
        s => estimate_loss_weights(&mut rng, s, 16, 64, 100_000).unwrap(),
    };
    let shape = NetShape { n: 16, dim: 4, hidden, hidden_layers: 3 };
    let mut params = NetParams::init(&mut rng, shape).unwrap();
    let cfg = TrainConfig {
        steps,
        batch,
        lambda_nll: lambda,
        log_every: (steps / 20).max(1),
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let report = train(&mut params, &data, sampler, &weights, NoiseSchedule::Linear, &cfg, &mut rng).unwrap();
    eprintln!("trained {steps} steps in {:.1?}", t0.elapsed());
    for (s, l) in &report.losses {
        eprintln!("  step {s:>6}  loss {l:.3}");
    }
    params.save(out.as_ref()).unwrap();
    eprintln!("saved {out}");
}

fn eval_sudoku<D: Denoiser + Sync>(
    den: &D,
    overlap: f64,
    policy_kind: &str,
    instances: usize,
    steps: usize,
    eta: f64,
    mode: VarianceMode,
) -> (f64, usize) {
    let (_, test_grids) = split_solutions(7);
    let results: Vec<(bool, bool)> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(100_000 + k as u64);
            let solution = &test_grids[rng.gen_range(0..test_grids.len())];
            let clues = sudoku::sample_mask(&mut rng, 2, Difficulty::Hard).unwrap();
            let n_active = clues.iter().filter(|&&c| !c).count();
            let values = sudoku::encode(solution).unwrap();
            let plan = plan_schedule(n_active, steps, overlap).unwrap();
            let policy = match policy_kind {
                "unc" => OrderPolicy::Uncertainty,
                _ => OrderPolicy::random(&mut rng, 16),
            };
            let cfg = InferenceConfig {
                schedule: NoiseSchedule::Linear,
                eta,
                variance_mode: mode,
                frame_every: 0,
            };
            match run_inference(&mut rng, &plan, &policy, den, &cfg, &clues, &values) {
                Ok((out, _)) => {
                    let decoded = sudoku::decode(&out, 2).unwrap();
                    (decoded.is_valid() && decoded.matches_clues(solution, &clues), false)
                }
                Err(_) => (false, true),
            }
        })
        .collect();
    let hits = results.iter().filter(|r| r.0).count();
    let errs = results.iter().filter(|r| r.1).count();
    (hits as f64 / instances as f64, errs)
}

fn train_ep(steps: usize, hidden: usize, out: &str) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data: Vec<VariableSet> = (0..2000)
        .map(|_| EvenPixelsImage::sample(&mut rng, 4, 4).unwrap().encode())
        .collect();
    let sampler = LevelSampler::uniform_tbar(1.0);
    let weights = estimate_loss_weights(&mut rng, &sampler, 16, 64, 100_000).unwrap();
    let shape = NetShape { n: 16, dim: 1, hidden, hidden_layers: 3 };
    let mut params = NetParams::init(&mut rng, shape).unwrap();
    let cfg = TrainConfig { steps, log_every: (steps / 20).max(1), ..TrainConfig::default() };
    let t0 = Instant::now();
    let report = train(&mut params, &data, &sampler, &weights, NoiseSchedule::Linear, &cfg, &mut rng).unwrap();
    eprintln!("trained {steps} steps in {:.1?}", t0.elapsed());
    for (s, l) in &report.losses {
        eprintln!("  step {s:>6}  loss {l:.3}");
    }
    params.save(out.as_ref()).unwrap();
    eprintln!("saved {out}");
}

fn eval_ep(den: &NetDenoiser, overlap: f64, instances: usize, steps: usize) -> f64 {
    let hits: usize = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(500_000 + k as u64);
            let plan = plan_schedule(16, steps, overlap).unwrap();
            let policy = OrderPolicy::random(&mut rng, 16);
            let cfg = InferenceConfig {
                schedule: NoiseSchedule::Linear,
                eta: 1.0,
                variance_mode: VarianceMode::Lower,
                frame_every: 0,
            };
            let observed = vec![false; 16];
            let values = VariableSet::zeros(16, 1);
            let (out, _) =
                run_inference(&mut rng, &plan, &policy, den, &cfg, &observed, &values).unwrap();
            EvenPixelsImage::decode(4, 4, &out).unwrap().is_balanced() as usize
        })
        .sum();
    hits as f64 / instances as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cmd = args.get(1).map(String::as_str).unwrap_or("help");
    let get = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());

    match cmd {
        "diag" => {
            // Exact posterior over all 288 solutions: validates the inference
            // plumbing independent of model quality.
            let sets: Vec<VariableSet> = sudoku::enumerate_solutions(2)
                .unwrap()
                .iter()
                .map(|g| sudoku::encode(g).unwrap())
                .collect();
            let corpus = Corpus::from_sets(&sets).unwrap();
            let den = ExactDenoiser::new(corpus, NoiseSchedule::Linear);
            let instances: usize = get(2, "200").parse().unwrap();
            let steps: usize = get(3, "320").parse().unwrap();
            for (overlap, pol) in [(1.0, "rand"), (0.0, "rand"), (0.0, "unc")] {
                let t0 = Instant::now();
                let (acc, errs) =
                    eval_sudoku(&den, overlap, pol, instances, steps, 1.0, VarianceMode::Lower);
                eprintln!(
                    "exact overlap {overlap:.1} policy {pol:>4}: acc {acc:.3} ({errs} errors) [{:.1?}]",
                    t0.elapsed()
                );
            }
        }
        "diag-sigma" => {
            let ckpt = get(2, "/tmp/sudoku_tbar.ckpt");
            let params = NetParams::load(ckpt.as_ref()).unwrap();
            let den = NetDenoiser::new(params, NoiseSchedule::Linear);
            let all = sudoku::enumerate_solutions(2).unwrap();
            let (_, test_grids) = split_solutions(7);
            let schedule = NoiseSchedule::Linear;

            // mean predicted sigma grouped by the number of digits consistent
            // with the clues, at two candidate noise levels
            for probe_t in [1.0, 0.95, 0.8] {
                let mut by_count: Vec<Vec<f64>> = vec![Vec::new(); 5];
                for k in 0..60u64 {
                    let mut rng = ChaCha8Rng::seed_from_u64(900_000 + k);
                    let solution = &test_grids[rng.gen_range(0..test_grids.len())];
                    let clues = sudoku::sample_mask(&mut rng, 2, Difficulty::Hard).unwrap();
                    let full = sudoku::encode(solution).unwrap();
                    let mut x = VariableSet::zeros(16, 4);
                    let mut t = vec![0.0f64; 16];
                    let (a, b) = schedule.eval(probe_t).unwrap();
                    for i in 0..16 {
                        if clues[i] {
                            x.var_mut(i).copy_from_slice(full.var(i));
                        } else {
                            t[i] = probe_t;
                            for (d, v) in x.var_mut(i).iter_mut().enumerate() {
                                let e: f64 = rand_distr::StandardNormal.sample(&mut rng);
                                *v = a * full.var(i)[d] + b * e;
                            }
                        }
                    }
                    let levels = seqdenoise::types::NoiseLevelVector::new(t).unwrap();
                    let out = den.evaluate(&x, &levels).unwrap();
                    let sigma = out.sigma();
                    for i in 0..16 {
                        if clues[i] {
                            continue;
                        }
                        let digits: std::collections::HashSet<u8> = all
                            .iter()
                            .filter(|g| (0..16).all(|j| !clues[j] || g.get(j) == solution.get(j)))
                            .map(|g| g.get(i))
                            .collect();
                        by_count[digits.len()].push(sigma[i]);
                    }
                }
                eprint!("probe_t {probe_t:.2}: mean sigma by consistent-digit count:");
                for c in 1..=4 {
                    let v = &by_count[c];
                    if v.is_empty() {
                        eprint!("  {c}: -");
                    } else {
                        eprint!("  {c}: {:.4} (n={})", v.iter().sum::<f64>() / v.len() as f64, v.len());
                    }
                }
                eprintln!();
            }

            // exclusion reasoning: can the net recover a uniquely forced cell
            // from clean clues while the rest stays pure noise
            for probe_t in [0.95, 0.8, 0.5, 0.2] {
                let mut hits = 0usize;
                let mut total = 0usize;
                for k in 0..400u64 {
                    let mut rng = ChaCha8Rng::seed_from_u64(950_000 + k);
                    let solution = &test_grids[rng.gen_range(0..test_grids.len())];
                    let clues = sudoku::sample_mask(&mut rng, 2, Difficulty::Hard).unwrap();
                    let full = sudoku::encode(solution).unwrap();
                    let consistent: Vec<&SudokuGrid> = all
                        .iter()
                        .filter(|g| (0..16).all(|j| !clues[j] || g.get(j) == solution.get(j)))
                        .collect();
                    let forced = (0..16).find(|&i| {
                        !clues[i]
                            && consistent
                                .iter()
                                .map(|g| g.get(i))
                                .collect::<std::collections::HashSet<_>>()
                                .len()
                                == 1
                    });
                    let Some(cell) = forced else { continue };
                    let digit = consistent[0].get(cell);
                    let mut x = VariableSet::zeros(16, 4);
                    let mut t = vec![0.0f64; 16];
                    for i in 0..16 {
                        if clues[i] {
                            x.var_mut(i).copy_from_slice(full.var(i));
                        } else {
                            let level = if i == cell { probe_t } else { 1.0 };
                            t[i] = level;
                            let (a, b) = schedule.eval(level).unwrap();
                            for (d, v) in x.var_mut(i).iter_mut().enumerate() {
                                let e: f64 = rand_distr::StandardNormal.sample(&mut rng);
                                *v = a * full.var(i)[d] + b * e;
                            }
                        }
                    }
                    let levels = seqdenoise::types::NoiseLevelVector::new(t).unwrap();
                    let out = den.evaluate(&x, &levels).unwrap();
                    let x0_hat = den.predict_x0(&x, &levels, &out).unwrap();
                    let v = x0_hat.var(cell);
                    let best = (0..4).max_by(|&p, &q| v[p].total_cmp(&v[q])).unwrap();
                    hits += (best as u8 + 1 == digit) as usize;
                    total += 1;
                }
                eprintln!(
                    "forced-cell recovery at t={probe_t:.2}: {:.3} ({total} cases)",
                    hits as f64 / total as f64
                );
            }
        }
        "diag-seq" => {
            let ckpt = get(2, "/tmp/sudoku_tbar.ckpt");
            let instances: usize = get(3, "40").parse().unwrap();
            let steps_total: usize = get(4, "320").parse().unwrap();
            let params = NetParams::load(ckpt.as_ref()).unwrap();
            let den = NetDenoiser::new(params, NoiseSchedule::Linear);
            let all = sudoku::enumerate_solutions(2).unwrap();
            let (_, test_grids) = split_solutions(7);
            let schedule = NoiseSchedule::Linear;

            // replay of the sequential loop with per-commit bookkeeping: is
            // each committed digit still extendable to a full solution given
            // the clues and the commits made before it?
            let mut order_stat: Vec<(usize, usize, f64)> = Vec::new(); // (ok, count, l_inf sum) per window
            let mut first_bad_window = Vec::new();
            let mut solved = 0usize;
            for k in 0..instances as u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(700_000 + k);
                let solution = &test_grids[rng.gen_range(0..test_grids.len())];
                let clue_mask = sudoku::sample_mask(&mut rng, 2, Difficulty::Hard).unwrap();
                let full = sudoku::encode(solution).unwrap();
                let n = 16usize;
                let n_active = clue_mask.iter().filter(|&&c| !c).count();
                let plan = plan_schedule(n_active, steps_total, 0.0).unwrap();
                let w = plan.window;

                let mut x = VariableSet::zeros(n, 4);
                let mut t = vec![0.0f64; n];
                for i in 0..n {
                    if clue_mask[i] {
                        x.var_mut(i).copy_from_slice(full.var(i));
                    } else {
                        t[i] = 1.0;
                        for v in x.var_mut(i) {
                            *v = rand_distr::StandardNormal.sample(&mut rng);
                        }
                    }
                }
                let mut started = vec![false; n];
                let mut start_step = vec![usize::MAX; n];
                let mut starts_at = vec![0usize; plan.steps_total];
                for &s in &plan.starts {
                    starts_at[s] += 1;
                }
                let mut committed = clue_mask.clone();
                let mut commit_digits: Vec<u8> = (0..n)
                    .map(|i| if clue_mask[i] { solution.get(i) } else { 0 })
                    .collect();
                let mut window_no = 0usize;
                let mut bad_at = usize::MAX;

                for g in 0..plan.steps_total {
                    let levels = seqdenoise::types::NoiseLevelVector::new(t.clone()).unwrap();
                    let out = den.evaluate(&x, &levels).unwrap();
                    let sigma = out.sigma();
                    for _ in 0..starts_at[g] {
                        let pick = (0..n)
                            .filter(|&i| !started[i] && !clue_mask[i])
                            .min_by(|&p, &q| sigma[p].total_cmp(&sigma[q]))
                            .unwrap();
                        started[pick] = true;
                        start_step[pick] = g;
                    }
                    let x0_hat = den.predict_x0(&x, &levels, &out).unwrap();
                    for i in 0..n {
                        if clue_mask[i] || !started[i] {
                            continue;
                        }
                        let j = g - start_step[i];
                        if j >= w {
                            continue;
                        }
                        let t_cur = (w - j) as f64 / w as f64;
                        let t_next = (w - j - 1) as f64 / w as f64;
                        let spec = StepSpec::new(t_cur, t_next, 1.0).unwrap();
                        let stepped = seqdenoise::process::denoising_step(
                            &mut rng,
                            schedule,
                            x.var(i),
                            x0_hat.var(i),
                            &spec,
                            VarianceMode::Lower,
                        )
                        .unwrap();
                        x.var_mut(i).copy_from_slice(&stepped);
                        t[i] = t_next;
                        if t_next == 0.0 {
                            // window just finished: grade the commitment
                            let v = x.var(i);
                            let best = (0..4).max_by(|&p, &q| v[p].total_cmp(&v[q])).unwrap();
                            let digit = best as u8 + 1;
                            let linf = v
                                .iter()
                                .enumerate()
                                .map(|(d, &val)| {
                                    (val - if d == best { 1.0 } else { -1.0 }).abs()
                                })
                                .fold(0.0f64, f64::max);
                            committed[i] = true;
                            commit_digits[i] = digit;
                            let extendable = all.iter().any(|s| {
                                (0..n).all(|c| !committed[c] || s.get(c) == commit_digits[c])
                            });
                            if order_stat.len() <= window_no {
                                order_stat.resize(window_no + 1, (0, 0, 0.0));
                            }
                            let e = &mut order_stat[window_no];
                            e.0 += extendable as usize;
                            e.1 += 1;
                            e.2 += linf;
                            if !extendable && bad_at == usize::MAX {
                                bad_at = window_no;
                            }
                            window_no += 1;
                        }
                    }
                }
                let decoded = sudoku::decode(&x, 2).unwrap();
                if decoded.is_valid() && decoded.matches_clues(solution, &clue_mask) {
                    solved += 1;
                }
                first_bad_window.push(bad_at);
            }
            eprintln!("solved {}/{}", solved, instances);
            for (wi, (ok, cnt, linf)) in order_stat.iter().enumerate() {
                eprintln!(
                    "window {wi:>2}: extendable {:.3} ({cnt})  mean Linf of commit {:.3}",
                    *ok as f64 / *cnt as f64,
                    linf / *cnt as f64
                );
            }
            let failed: Vec<usize> =
                first_bad_window.iter().copied().filter(|&b| b != usize::MAX).collect();
            eprintln!(
                "instances with a dead commitment: {}/{}; first bad window histogram: {:?}",
                failed.len(),
                instances,
                (0..12)
                    .map(|w| failed.iter().filter(|&&b| b == w).count())
                    .collect::<Vec<_>>()
            );
        }
        "train-sudoku" => {
            let steps: usize = get(2, "20000").parse().unwrap();
            let hidden: usize = get(3, "256").parse().unwrap();
            let sharpness: f64 = get(8, "1.0").parse().unwrap();
            let sampler = match get(4, "tbar").as_str() {
                "t" => LevelSampler::UniformT,
                _ => LevelSampler::uniform_tbar(sharpness),
            };
            let out = get(5, "/tmp/sudoku.ckpt");
            let lambda: f64 = get(6, "0.01").parse().unwrap();
            let batch: usize = get(7, "128").parse().unwrap();
            train_sudoku(&sampler, steps, hidden, &out, lambda, batch);
        }
        "eval-sudoku" => {
            let ckpt = get(2, "/tmp/sudoku.ckpt");
            let overlap: f64 = get(3, "0.0").parse().unwrap();
            let pol = get(4, "unc");
            let instances: usize = get(5, "500").parse().unwrap();
            let steps: usize = get(6, "320").parse().unwrap();
            let eta: f64 = get(7, "1.0").parse().unwrap();
            let mode = match get(8, "lower").as_str() {
                "upper" => VarianceMode::Upper,
                _ => VarianceMode::Lower,
            };
            let params = NetParams::load(ckpt.as_ref()).unwrap();
            let den = NetDenoiser::new(params, NoiseSchedule::Linear);
            let t0 = Instant::now();
            let (acc, errs) = eval_sudoku(&den, overlap, &pol, instances, steps, eta, mode);
            eprintln!(
                "net overlap {overlap:.2} policy {pol} eta {eta} {mode:?}: acc {acc:.3} ({errs} errors) [{:.1?}]",
                t0.elapsed()
            );
        }
        "train-ep" => {
            let steps: usize = get(2, "20000").parse().unwrap();
            let hidden: usize = get(3, "128").parse().unwrap();
            let out = get(4, "/tmp/ep.ckpt");
            train_ep(steps, hidden, &out);
        }
        "eval-ep" => {
            let ckpt = get(2, "/tmp/ep.ckpt");
            let instances: usize = get(3, "500").parse().unwrap();
            let steps: usize = get(4, "320").parse().unwrap();
            let params = NetParams::load(ckpt.as_ref()).unwrap();
            let den = NetDenoiser::new(params, NoiseSchedule::Linear);
            for overlap in [0.0, 0.5, 0.9, 0.95, 1.0] {
                let t0 = Instant::now();
                let acc = eval_ep(&den, overlap, instances, steps);
                eprintln!("ep overlap {overlap:.2}: acc {acc:.3} [{:.1?}]", t0.elapsed());
            }
        }
        other => eprintln!("unknown command {other}"),
    }
}
