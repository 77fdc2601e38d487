//! Subcommand implementations: training loops, checkpoint evaluation,
//! sampling, and dataset generation.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use trug_core::ais::AisConfig;
use trug_core::checkpoint;
use trug_core::data::{self, Binarize, BouncingBallConfig};
use trug_core::optim::OptimizerState;
use trug_core::rbm::{stream_rng, RbmModel};
use trug_core::tggm::TggmModel;
use trug_core::trbm::{Sequence, TrbmModel};
use trug_core::truncnorm;
use trug_core::trug::DEFAULT_MIN_GAP;
use trug_core::TrugError;

use crate::config::{BinarizeKind, DatasetKind, ModelKind, RunConfig};
use crate::metrics::MetricWriter;
use crate::CliError;

/// Floor applied to hidden precisions after each ascent step.
const MIN_PRECISION: f64 = 1e-3;

fn step_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step)
}

fn checkpoint_path(config: &RunConfig) -> PathBuf {
    config.output_dir.join("checkpoint.bin")
}

fn shuffled_batches(count: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = stream_rng(seed, epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn load_images(config: &RunConfig) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize), CliError> {
    let binarize = match config.dataset.binarize {
        BinarizeKind::Threshold => Binarize::Threshold(config.dataset.threshold),
        BinarizeKind::Stochastic => Binarize::Stochastic { seed: config.seed },
    };
    let dataset = data::load_idx_images(&config.dataset_path()?, binarize)?;
    let n = dataset.n_pixels();
    let total = dataset.images.len();
    let test_count = config.dataset.test_count.min(total);
    let avail = total - test_count;
    let train_count = config.dataset.train_count.unwrap_or(avail).min(avail);
    if train_count == 0 {
        return Err(CliError::Config("image dataset leaves no training examples".into()));
    }
    let train = dataset.images[..train_count].to_vec();
    let test = dataset.images[total - test_count..].to_vec();
    Ok((train, test, n))
}

fn load_sequences(config: &RunConfig) -> Result<(Vec<Sequence>, Vec<Sequence>, usize), CliError> {
    let (sequences, n) = match config.dataset.kind {
        DatasetKind::BouncingBalls => {
            let ball_config = BouncingBallConfig {
                n_sequences: config.dataset.n_sequences,
                n_balls: config.dataset.n_balls,
                frame_size: config.dataset.frame_size,
                n_frames: config.dataset.n_frames,
                radius: config.dataset.radius,
                speed: config.dataset.speed,
                seed: config.seed,
            };
            let seqs = data::generate_bouncing_balls(&ball_config)?;
            let n = config.dataset.frame_size * config.dataset.frame_size;
            (seqs, n)
        }
        _ => {
            let (seqs, (w, h)) = data::read_sequences(&config.dataset_path()?)?;
            (seqs, w * h)
        }
    };
    let total = sequences.len();
    let test_count = config.dataset.test_count.min(total);
    let avail = total - test_count;
    let train_count = config.dataset.train_count.unwrap_or(avail).min(avail);
    if train_count == 0 {
        return Err(CliError::Config("sequence dataset leaves no training sequences".into()));
    }
    let train = sequences[..train_count].to_vec();
    let test = sequences[total - test_count..].to_vec();
    Ok((train, test, n))
}

fn load_regression(
    config: &RunConfig,
) -> Result<(data::RegressionDataset, data::RegressionDataset), CliError> {
    Ok(data::load_regression_csv(
        &config.dataset_path()?,
        &config.dataset.target_columns,
        config.dataset.has_header,
        config.seed,
        config.dataset.test_fraction,
    )?)
}

pub fn train(config: &RunConfig) -> Result<(), CliError> {
    config.snapshot()?;
    let mut metrics = MetricWriter::create(&config.output_dir.join("metrics.jsonl"))?;
    match config.model {
        ModelKind::Rbm => train_rbm(config, &mut metrics),
        ModelKind::Trbm => train_trbm(config, &mut metrics),
        ModelKind::Tggm => train_tggm(config, &mut metrics),
    }
}

/// Shared post-gradient bookkeeping: truncation step then interval report.
fn trunc_metrics(trug: &trug_core::trug::TrugParams) -> (f64, f64) {
    let m = trug.raw_lower().len() as f64;
    (
        trug.raw_lower().iter().sum::<f64>() / m,
        trug.raw_upper().iter().sum::<f64>() / m,
    )
}

fn train_rbm(config: &RunConfig, metrics: &mut MetricWriter) -> Result<(), CliError> {
    let (train, _, n) = load_images(config)?;
    let mut rng = stream_rng(config.seed, 0);
    let trug = config.trug_params(config.network.hidden)?;
    let mut model = RbmModel::init(n, config.network.hidden, trug, &mut rng)?;

    let batches_per_epoch = train.len().div_ceil(config.training.batch_size);
    let opt = config.optimizer_config(config.epochs * batches_per_epoch)?;
    let sizes = [model.w.data().len(), model.b.len(), model.c.len(), model.d.len()];
    let mut state = OptimizerState::new(&sizes);
    let ckpt = checkpoint_path(config);

    for epoch in 0..config.epochs {
        for batch_ids in shuffled_batches(train.len(), config.training.batch_size, config.seed, epoch)
        {
            let batch: Vec<Vec<f64>> = batch_ids.iter().map(|&i| train[i].clone()).collect();
            let (g, tg) =
                model.cd_grads(&batch, config.training.cd_k, step_seed(config.seed, state.step_count() as u64))?;
            state.update_block(&opt, 0, "w", model.w.data_mut(), g.dw.data(), None)?;
            state.update_block(&opt, 1, "b", &mut model.b, &g.db, None)?;
            state.update_block(&opt, 2, "c", &mut model.c, &g.dc, None)?;
            state.update_block(&opt, 3, "d", &mut model.d, &g.dd, None)?;
            for d in model.d.iter_mut() {
                *d = d.max(MIN_PRECISION);
            }
            let rate = state.trunc_rate(&opt);
            model.trug.apply_step(&tg, rate, DEFAULT_MIN_GAP);
            state.advance();
        }
        if (epoch + 1) % config.training.eval_every == 0 {
            let recon = reconstruction_error(&model, &train);
            let (lo, up) = trunc_metrics(&model.trug);
            metrics.record(
                state.step_count() as u64,
                &[("recon_error", recon), ("trunc_lower", lo), ("trunc_upper", up)],
            )?;
        }
        if (epoch + 1) % config.training.checkpoint_every == 0 {
            checkpoint::save_rbm(&ckpt, &model)?;
        }
    }
    checkpoint::save_rbm(&ckpt, &model)?;
    Ok(())
}

/// Mean squared pixel error of the one-sweep mean reconstruction over a
/// bounded subset of the data; a cheap training-progress proxy.
fn reconstruction_error(model: &RbmModel, data: &[Vec<f64>]) -> f64 {
    let subset = &data[..data.len().min(200)];
    let mut total = 0.0;
    let mut count = 0usize;
    for x in subset {
        let h: Vec<f64> = model
            .hidden_conditional(x)
            .iter()
            .map(|(base, iv)| truncnorm::trunc_mean(base, iv))
            .collect();
        let probs = model.visible_conditional(&h);
        total += x
            .iter()
            .zip(&probs)
            .map(|(xi, p)| (xi - p) * (xi - p))
            .sum::<f64>();
        count += x.len();
    }
    total / count as f64
}

fn train_trbm(config: &RunConfig, metrics: &mut MetricWriter) -> Result<(), CliError> {
    let (train, _, n) = load_sequences(config)?;
    let mut rng = stream_rng(config.seed, 0);
    let trug = config.trug_params(config.network.hidden)?;
    let mut model = TrbmModel::init(n, config.network.hidden, trug, &mut rng)?;

    let batches_per_epoch = train.len().div_ceil(config.training.batch_size);
    let opt = config.optimizer_config(config.epochs * batches_per_epoch)?;
    let sizes = [
        model.w1.data().len(),
        model.w2.data().len(),
        model.w3.data().len(),
        model.w4.data().len(),
        model.a.len(),
        model.b.len(),
        model.c.len(),
        model.d.len(),
    ];
    let mut state = OptimizerState::new(&sizes);
    let ckpt = checkpoint_path(config);

    for epoch in 0..config.epochs {
        for batch_ids in shuffled_batches(train.len(), config.training.batch_size, config.seed, epoch)
        {
            let batch: Vec<Sequence> = batch_ids.iter().map(|&i| train[i].clone()).collect();
            let (g, tg) = model.lower_bound_grads(
                &batch,
                config.training.cd_k,
                step_seed(config.seed, state.step_count() as u64),
            )?;
            state.update_block(&opt, 0, "w1", model.w1.data_mut(), g.dw1.data(), None)?;
            state.update_block(&opt, 1, "w2", model.w2.data_mut(), g.dw2.data(), None)?;
            state.update_block(&opt, 2, "w3", model.w3.data_mut(), g.dw3.data(), None)?;
            state.update_block(&opt, 3, "w4", model.w4.data_mut(), g.dw4.data(), None)?;
            state.update_block(&opt, 4, "a", &mut model.a, &g.da, None)?;
            state.update_block(&opt, 5, "b", &mut model.b, &g.db, None)?;
            state.update_block(&opt, 6, "c", &mut model.c, &g.dc, None)?;
            state.update_block(&opt, 7, "d", &mut model.d, &g.dd, None)?;
            for d in model.d.iter_mut() {
                *d = d.max(MIN_PRECISION);
            }
            let rate = state.trunc_rate(&opt);
            model.trug.apply_step(&tg, rate, DEFAULT_MIN_GAP);
            state.advance();
        }
        if (epoch + 1) % config.training.eval_every == 0 {
            let probe = &train[..train.len().min(10)];
            let err = model.prediction_error(probe)?;
            let (lo, up) = trunc_metrics(&model.trug);
            metrics.record(
                state.step_count() as u64,
                &[("prediction_error", err), ("trunc_lower", lo), ("trunc_upper", up)],
            )?;
        }
        if (epoch + 1) % config.training.checkpoint_every == 0 {
            checkpoint::save_trbm(&ckpt, &model)?;
        }
    }
    checkpoint::save_trbm(&ckpt, &model)?;
    Ok(())
}

fn train_tggm(config: &RunConfig, metrics: &mut MetricWriter) -> Result<(), CliError> {
    let (train, _) = load_regression(config)?;
    let p = train.inputs[0].len();
    let q = train.targets[0].len();
    let mut rng = stream_rng(config.seed, 0);
    let trug = config.trug_params(config.network.hidden)?;
    let mut model = TggmModel::init(p, config.network.hidden, q, trug, &mut rng)?;
    model.sigma2_trainable = config.network.sigma2_trainable;

    let batches_per_epoch = train.inputs.len().div_ceil(config.training.batch_size);
    let opt = config.optimizer_config(config.epochs * batches_per_epoch)?;
    let sizes = [
        model.w0.data().len(),
        model.b0.len(),
        model.w1.data().len(),
        model.b1.len(),
        1,
    ];
    let mut state = OptimizerState::new(&sizes);
    let ckpt = checkpoint_path(config);

    for epoch in 0..config.epochs {
        for batch_ids in
            shuffled_batches(train.inputs.len(), config.training.batch_size, config.seed, epoch)
        {
            let xb: Vec<Vec<f64>> = batch_ids.iter().map(|&i| train.inputs[i].clone()).collect();
            let yb: Vec<Vec<f64>> = batch_ids.iter().map(|&i| train.targets[i].clone()).collect();
            let (g, tg) = model.ml_grads(&xb, &yb, config.training.vb_cycles)?;
            state.update_block(&opt, 0, "w0", model.w0.data_mut(), g.dw0.data(), None)?;
            state.update_block(&opt, 1, "b0", &mut model.b0, &g.db0, None)?;
            state.update_block(&opt, 2, "w1", model.w1.data_mut(), g.dw1.data(), None)?;
            state.update_block(&opt, 3, "b1", &mut model.b1, &g.db1, None)?;
            if model.sigma2_trainable {
                let mut log_sigma2 = [model.sigma2.ln()];
                state.update_block(&opt, 4, "log_sigma2", &mut log_sigma2, &[g.d_log_sigma2], None)?;
                model.sigma2 = log_sigma2[0].exp().clamp(1e-8, 1e8);
            }
            let rate = state.trunc_rate(&opt);
            model.trug.apply_step(&tg, rate, DEFAULT_MIN_GAP);
            state.advance();
        }
        if (epoch + 1) % config.training.eval_every == 0 {
            let rmse = model.rmse(&train.inputs, &train.targets)?;
            let (lo, up) = trunc_metrics(&model.trug);
            metrics.record(
                state.step_count() as u64,
                &[("train_rmse", rmse), ("sigma2", model.sigma2), ("trunc_lower", lo), ("trunc_upper", up)],
            )?;
        }
        if (epoch + 1) % config.training.checkpoint_every == 0 {
            checkpoint::save_tggm(&ckpt, &model)?;
        }
    }
    checkpoint::save_tggm(&ckpt, &model)?;
    Ok(())
}

pub fn eval(config: &RunConfig, ckpt: &Path) -> Result<(), CliError> {
    let report = match config.model {
        ModelKind::Rbm => {
            let model = checkpoint::load_rbm(ckpt)?;
            let (_, test, _) = load_images(config)?;
            if test.is_empty() {
                return Err(CliError::Config(
                    "rbm evaluation needs dataset.test-count > 0".into(),
                ));
            }
            let ais = AisConfig::linear(config.ais.n_temps, config.ais.n_chains, model.b.clone());
            let est = trug_core::ais::run_ais(&ais, &model, config.seed)?;
            let (_, mean) = trug_core::ais::test_log_prob(&ais, &model, &test, config.seed)?;
            serde_json::json!({
                "model": "rbm",
                "test_log_prob": mean,
                "ais_log_z": est.log_z,
                "ais_std_err": est.std_err,
                "ais_ess": est.ess,
            })
        }
        ModelKind::Trbm => {
            let model = checkpoint::load_trbm(ckpt)?;
            let (train, test, _) = load_sequences(config)?;
            let eval_set = if test.is_empty() { &train } else { &test };
            let err = model.prediction_error(eval_set)?;
            serde_json::json!({ "model": "trbm", "prediction_error": err })
        }
        ModelKind::Tggm => {
            let model = checkpoint::load_tggm(ckpt)?;
            let (_, test) = load_regression(config)?;
            let rmse_standardized = model.rmse(&test.inputs, &test.targets)?;
            let preds = test
                .inputs
                .iter()
                .map(|x| model.predict(x))
                .collect::<Vec<_>>();
            let preds = test.destandardize_targets(&preds);
            let truth = test.destandardize_targets(&test.targets);
            let mut sse = 0.0;
            let mut count = 0usize;
            for (p, t) in preds.iter().zip(&truth) {
                sse += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                count += p.len();
            }
            serde_json::json!({
                "model": "tggm",
                "rmse": (sse / count as f64).sqrt(),
                "rmse_standardized": rmse_standardized,
            })
        }
    };
    println!("{report}");
    Ok(())
}

pub fn sample(
    config: &RunConfig,
    ckpt: &Path,
    output: &Path,
    count: usize,
    steps: usize,
    frames: usize,
) -> Result<(), CliError> {
    let (sequences, width, height) = match config.model {
        ModelKind::Rbm => {
            let model = checkpoint::load_rbm(ckpt)?;
            let samples = model.sample_fantasy(steps, count, config.seed)?;
            let (w, h) = grid_shape(model.n_visible());
            let seqs: Vec<Sequence> = samples.into_iter().map(|x| vec![x]).collect();
            (seqs, w, h)
        }
        ModelKind::Trbm => {
            let model = checkpoint::load_trbm(ckpt)?;
            let seqs = generate_trbm_sequences(&model, count, frames, steps, config.seed)?;
            let (w, h) = grid_shape(model.n_visible());
            (seqs, w, h)
        }
        ModelKind::Tggm => {
            return Err(TrugError::Unsupported(
                "the regression model is conditional and has no unconditional samples; use eval"
                    .into(),
            )
            .into());
        }
    };
    data::write_sequences(output, &sequences, width, height)?;
    let render = render_grids(&sequences, width, height);
    std::fs::write(output.with_extension("txt"), render)
        .map_err(|e| CliError::Config(format!("cannot write text render: {e}")))?;
    Ok(())
}

/// Generated sequences: each frame is drawn by burning in the conditional
/// per-timestep model from a fresh random state, then the filtering hidden
/// state is sampled to condition the next frame.
fn generate_trbm_sequences(
    model: &TrbmModel,
    count: usize,
    frames: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Sequence>, CliError> {
    let n = model.n_visible();
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let mut rng = stream_rng(seed, s as u64);
        let mut x_prev = vec![0.0; n];
        let mut h_prev = vec![0.0; model.n_hidden()];
        let mut seq = Vec::with_capacity(frames);
        for _ in 0..frames {
            let cond = model.conditional_rbm(&x_prev, &h_prev);
            let frame = cond.sample_fantasy(steps, 1, rng.random())?.remove(0);
            for (j, (base, iv)) in cond.hidden_conditional(&frame).iter().enumerate() {
                h_prev[j] = truncnorm::sample(base, iv, &mut rng)?;
            }
            x_prev = frame.clone();
            seq.push(frame);
        }
        out.push(seq);
    }
    Ok(out)
}

/// Square grid when the unit count allows it, one row otherwise.
fn grid_shape(n: usize) -> (usize, usize) {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n {
        (side, side)
    } else {
        (n, 1)
    }
}

fn render_grids(sequences: &[Sequence], width: usize, height: usize) -> String {
    let mut out = String::new();
    for (s, seq) in sequences.iter().enumerate() {
        for (t, frame) in seq.iter().enumerate() {
            out.push_str(&format!("sample {s} frame {t}\n"));
            for row in 0..height {
                for col in 0..width {
                    out.push(if frame[row * width + col] > 0.5 { '#' } else { '.' });
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

pub fn gen_data(config: &RunConfig, output: &Path) -> Result<(), CliError> {
    let ball_config = BouncingBallConfig {
        n_sequences: config.dataset.n_sequences,
        n_balls: config.dataset.n_balls,
        frame_size: config.dataset.frame_size,
        n_frames: config.dataset.n_frames,
        radius: config.dataset.radius,
        speed: config.dataset.speed,
        seed: config.seed,
    };
    let sequences = data::generate_bouncing_balls(&ball_config)?;
    data::write_sequences(output, &sequences, ball_config.frame_size, ball_config.frame_size)?;
    println!(
        "wrote {} sequences of {} frames ({}x{}) to {}",
        sequences.len(),
        ball_config.n_frames,
        ball_config.frame_size,
        ball_config.frame_size,
        output.display()
    );
    Ok(())
}
