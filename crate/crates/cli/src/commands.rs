use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use cutin_core::features::{self, side_of, StreamWindower};
use cutin_core::harness::{evaluate, grid_search, sweep_lengths, timing_report, GridSpec, Metrics};
use cutin_core::strategies::{load_strategy, save_strategy, train_strategy_with_history};
use cutin_core::synthgen::{clip_detections, generate_dataset};
use cutin_core::trackdata::{
    parse_observation_row, parse_observations, serialize_observations, split_dataset, DatasetSplit,
    LabeledClip, SceneMeta, Track, OBSERVATION_HEADER,
};
use cutin_core::tracker::{frames_from_rows, track_sequence};
use cutin_core::{Classification, Error, Result, Strategy, StrategyKind};

use crate::config::{check_length, RunConfig};
use crate::dataset::{
    self, create_dir, read_dataset, read_text, select, split_csv, write_text, Part,
};
use crate::{
    ClassifyArgs, DataArgs, EvalArgs, FeaturizeArgs, GridArgs, SceneFlags, SimulateArgs,
    StreamArgs, SweepArgs, TimingArgs, TrackArgs, TrainArgs,
};

fn out_err(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn apply_scene(cfg: &mut RunConfig, flags: &SceneFlags) -> Result<()> {
    if let Some(v) = flags.fps {
        cfg.scene.fps = v;
    }
    if let Some(v) = flags.width {
        cfg.scene.width = v;
    }
    if let Some(v) = flags.height {
        cfg.scene.height = v;
    }
    cfg.validate()
}

fn workers(n: Option<usize>) -> Result<usize> {
    match n {
        Some(0) => Err(Error::Config("--workers must be >= 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load_model(path: &Path) -> Result<Strategy> {
    load_strategy(&read_text(path)?).map_err(|e| match e {
        Error::Serde(m) => Error::Input(format!("{}: not a model file: {m}", path.display())),
        e => e,
    })
}

fn split_of(cfg: &RunConfig, clips: &[LabeledClip]) -> Result<DatasetSplit> {
    let r = cfg.split.ratios;
    split_dataset(clips, (r[0], r[1], r[2]), cfg.seed)
}

fn strategy_and_length(cfg: &RunConfig, a: &DataArgs) -> Result<(StrategyKind, usize)> {
    let length = a.length.unwrap_or(cfg.train.length);
    check_length("--length", length)?;
    Ok((a.strategy.unwrap_or_else(|| cfg.strategy()), length))
}

/// `p=a,b` with four decimals.
fn probs(p: &[f64]) -> String {
    p.iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Decision text shared by `classify` and `stream`.
pub fn decision(c: &Classification) -> String {
    let mut s = format!("{} p={}", c.class, probs(&c.probabilities));
    if let Some(side) = c.side {
        s.push_str(&format!(" side={side}"));
    }
    s
}

fn metrics_text(m: &Metrics) -> String {
    let mut s = format!("accuracy {:.4}\n", m.accuracy);
    s.push_str(&m.per_class_csv());
    s.push_str("confusion\n");
    for row in &m.confusion {
        s.push_str(&row.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn simulate(mut cfg: RunConfig, a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = a.n {
        cfg.synth.n = n;
    }
    if let Some(d) = a.distractors {
        cfg.synth.distractors = d;
    }
    apply_scene(&mut cfg, &a.scene)?;
    let gp = cfg.gen_params()?;
    let clips = generate_dataset(cfg.synth.n, &gp, &cfg.synth.ranges)?;
    let detections = if a.detections {
        let tables = clips
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rows = clip_detections(
                    c,
                    cfg.synth.distractors,
                    &cfg.synth.camera,
                    cfg.seed.wrapping_add(i as u64),
                )?;
                Ok(dataset::detection_table(&rows))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(tables)
    } else {
        None
    };
    dataset::write_dataset(&a.out, &clips, detections.as_deref())?;
    writeln!(out, "wrote {} clips to {}", clips.len(), a.out.display()).map_err(out_err)
}

pub fn track(cfg: RunConfig, a: &TrackArgs, out: &mut dyn Write) -> Result<()> {
    let text = read_text(&a.detections)?;
    let rows = if text.trim().is_empty() {
        vec![]
    } else {
        parse_observations(&text)?
    };
    if rows.is_empty() {
        log::warn!("{} holds no detections", a.detections.display());
    }
    let frames = frames_from_rows(rows.into_iter().map(|r| r.detection));
    let tracks = track_sequence(&frames, &cfg.tracker)?;
    create_dir(&a.out)?;
    for t in &tracks {
        write_text(
            &a.out.join(format!("track_{}.csv", t.target_id)),
            &serialize_observations(t),
        )?;
    }
    writeln!(out, "tracks {}", tracks.len()).map_err(out_err)
}

pub fn featurize(cfg: RunConfig, a: &FeaturizeArgs, out: &mut dyn Write) -> Result<()> {
    let length = a.length.unwrap_or(cfg.train.length);
    check_length("--length", length)?;
    let clips = read_dataset(&a.data)?;
    let mut s = String::from("clip_id,label,step,cx,cy,w,h\n");
    for c in &clips {
        let f = features::featurize(&c.track, &c.scene, length, &c.clip_id)?;
        for (k, r) in f.values.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{k},{:.6},{:.6},{:.6},{:.6}\n",
                c.clip_id, c.label, r[0], r[1], r[2], r[3]
            ));
        }
    }
    match &a.out {
        Some(p) => write_text(p, &s),
        None => out.write_all(s.as_bytes()).map_err(out_err),
    }
}

pub fn train(mut cfg: RunConfig, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let (kind, length) = strategy_and_length(&cfg, &a.data)?;
    let clips = read_dataset(&a.data.data)?;
    let split = split_of(&cfg, &clips)?;
    let (tr, va) = (
        select(&split, Part::Train, &clips),
        select(&split, Part::Val, &clips),
    );
    let (strategy, histories) = train_strategy_with_history(
        kind,
        &tr,
        &va,
        length,
        &cfg.hyperparameters(),
        &cfg.train_config(),
    )?;

    create_dir(&a.out)?;
    write_text(&a.out.join("model.json"), &save_strategy(&strategy)?)?;
    let mut h = String::from("model,epoch,train_loss,val_accuracy\n");
    for (name, hist) in &histories {
        for e in &hist.epochs {
            h.push_str(&format!(
                "{name},{},{:.6},{:.4}\n",
                e.epoch, e.train_loss, e.val_accuracy
            ));
        }
    }
    write_text(&a.out.join("history.csv"), &h)?;
    write_text(&a.out.join("split.csv"), &split_csv(&split))?;
    let val = if va.is_empty() {
        None
    } else {
        Some(evaluate(&strategy, &va)?.accuracy)
    };
    writeln!(
        out,
        "trained {kind} L={length} on {} clips; val accuracy {}",
        tr.len(),
        val.map_or("n/a".into(), |v| format!("{v:.4}"))
    )
    .map_err(out_err)
}

pub fn gridsearch(cfg: RunConfig, a: &GridArgs, out: &mut dyn Write) -> Result<()> {
    let (kind, length) = strategy_and_length(&cfg, &a.data)?;
    let workers = workers(a.workers)?;
    let clips = read_dataset(&a.data.data)?;
    let split = split_of(&cfg, &clips)?;
    let (tr, va) = (
        select(&split, Part::Train, &clips),
        select(&split, Part::Val, &clips),
    );
    let grid = cfg.grid();
    log::info!(
        "grid search over {} candidates with {workers} worker(s)",
        grid.len()
    );
    let result = grid_search(kind, &tr, &va, length, &grid, &cfg.train_config(), workers)?;

    create_dir(&a.out)?;
    write_text(&a.out.join("leaderboard.csv"), &result.leaderboard_csv())?;
    write_text(&a.out.join("split.csv"), &split_csv(&split))?;
    let Some(best) = &result.best else {
        return Err(Error::Numerical(
            "every grid candidate failed to train".into(),
        ));
    };
    write_text(&a.out.join("model.json"), &save_strategy(best)?)?;
    let i = result.best_index.expect("best model has an index");
    let acc = result.candidates[i].val_accuracy.unwrap_or(f64::NAN);
    writeln!(
        out,
        "candidates {} best {i} val accuracy {acc:.4}",
        result.candidates.len()
    )
    .map_err(out_err)
}

pub fn eval(cfg: RunConfig, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let strategy = load_model(&a.model)?;
    let clips = read_dataset(&a.data)?;
    let split = split_of(&cfg, &clips)?;
    let part = select(&split, a.part, &clips);
    let m = evaluate(&strategy, &part)?;
    let mut text = metrics_text(&m);
    if m.class_set != m.merged_cut_in().class_set {
        text.push_str(&format!(
            "merged accuracy {:.4}\n",
            m.merged_cut_in().accuracy
        ));
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join("metrics.csv"), &m.per_class_csv())?;
        write_text(&dir.join("summary.txt"), &text)?;
    }
    out.write_all(text.as_bytes()).map_err(out_err)
}

/// The longest single-target track of an observation table.
fn table_track(text: &str) -> Result<Track> {
    let rows = parse_observations(text)?;
    let mut by_id: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.target_id).or_default().push(r.detection);
    }
    let (id, mut obs) = by_id
        .into_iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .ok_or_else(|| Error::Input("observation table has no rows".into()))?;
    obs.sort_by_key(|d| d.frame_idx);
    Track::new(id, obs)
}

pub fn classify(mut cfg: RunConfig, a: &ClassifyArgs, out: &mut dyn Write) -> Result<()> {
    apply_scene(&mut cfg, &a.scene)?;
    let strategy = load_model(&a.model)?;
    let (track, scene): (Track, SceneMeta) = match a.clip.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            let c = dataset::read_clip(&a.clip, None)?;
            (c.track, c.scene)
        }
        Some("csv") => (table_track(&read_text(&a.clip)?)?, cfg.scene()?),
        _ => {
            return Err(Error::Config(format!(
                "--clip must be a .toml manifest or a .csv table: {}",
                a.clip.display()
            )))
        }
    };
    if track.len() < strategy.seq_len() {
        return Err(Error::Input(format!(
            "sequence too short: {} observations, model needs {}",
            track.len(),
            strategy.seq_len()
        )));
    }
    let c = strategy.classify(&track, &scene)?;
    writeln!(out, "{}", decision(&c)).map_err(out_err)
}

pub fn stream(
    mut cfg: RunConfig,
    a: &StreamArgs,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<()> {
    apply_scene(&mut cfg, &a.scene)?;
    let strategy = load_model(&a.model)?;
    let scene = cfg.scene()?;
    let mut windower = StreamWindower::new(scene.clone(), strategy.seq_len())?;
    let mut target = a.target;
    let mut line = String::new();
    let mut n = 0u64;
    loop {
        line.clear();
        if input.read_line(&mut line).map_err(out_err)? == 0 {
            break;
        }
        n += 1;
        let text = line.trim();
        if text.is_empty() || (n == 1 && text == OBSERVATION_HEADER) {
            continue;
        }
        let row = parse_observation_row(text, n)?;
        let id = *target.get_or_insert(row.target_id);
        if row.target_id != id {
            continue;
        }
        let Some(w) = windower.push(id, row.detection)? else {
            continue;
        };
        let start = Instant::now();
        let c = strategy.classify_features(&w.features, side_of(&w.track, &scene))?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let mut msg = format!("window {}-{} {}", w.first_frame, w.last_frame, decision(&c));
        if !a.no_timing {
            msg.push_str(&format!(" ms={ms:.3}"));
        }
        writeln!(out, "{msg}").map_err(out_err)?;
        out.flush().map_err(out_err)?;
    }
    if windower.pending() > 0 {
        log::info!(
            "dropped {} frame(s) of an incomplete final window",
            windower.pending()
        );
    }
    Ok(())
}

pub fn sweep(cfg: RunConfig, a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    for &l in &a.lengths {
        check_length("--lengths", l)?;
    }
    let kind = a.strategy.unwrap_or_else(|| cfg.strategy());
    let workers = workers(a.workers)?;
    let clips = read_dataset(&a.data)?;
    let split = split_of(&cfg, &clips)?;
    let grid = if a.no_grid {
        GridSpec::single(&cfg.hyperparameters())
    } else {
        cfg.grid()
    };
    let rows = sweep_lengths(
        kind,
        &select(&split, Part::Train, &clips),
        &select(&split, Part::Val, &clips),
        &select(&split, Part::Test, &clips),
        &a.lengths,
        &grid,
        &cfg.train_config(),
        workers,
    )?;
    let mut s = String::from("length,excluded,best_index,hidden_units,batch_size,optimizer,activation,dropout,test_accuracy\n");
    for r in &rows {
        let h = r.best_hyper.as_ref();
        let opt = |f: &dyn Fn(&cutin_core::Hyperparameters) -> String| h.map(f).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.length,
            r.excluded,
            r.best_index.map(|i| i.to_string()).unwrap_or_default(),
            opt(&|h| h.hidden_units.to_string()),
            opt(&|h| h.batch_size.to_string()),
            opt(&|h| h.optimizer.to_string()),
            opt(&|h| h.activation.to_string()),
            opt(&|h| h.dropout.to_string()),
            r.metrics
                .as_ref()
                .map(|m| format!("{:.4}", m.accuracy))
                .unwrap_or_default()
        ));
    }
    create_dir(&a.out)?;
    write_text(&a.out.join("sweep.csv"), &s)?;
    out.write_all(s.as_bytes()).map_err(out_err)
}

pub fn timing(cfg: RunConfig, a: &TimingArgs, out: &mut dyn Write) -> Result<()> {
    let strategy = load_model(&a.model)?;
    let clips = read_dataset(&a.data)?;
    let split = split_of(&cfg, &clips)?;
    let part = select(&split, a.part, &clips);
    let reps = a.repetitions.unwrap_or(cfg.timing.repetitions);
    let (report, _) = timing_report(&strategy, &part, reps, &cfg.tracker)?;
    let s = report.to_csv();
    match &a.out {
        Some(p) => write_text(p, &s),
        None => out.write_all(s.as_bytes()).map_err(out_err),
    }
}
