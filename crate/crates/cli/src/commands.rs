use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use atr_core::audio::{chunk, encode_chunks, encode_clip, mix_noise, read_wav, remove_silence, PreprocessConfig, SnrSpec, ToyEncoder};
use atr_core::numerics::Tensor2D;
use atr_core::refinement::{embed_single, Modality};
use atr_core::retrieval::{
    bm25_search, lexical_search, semantic_search, table_csv, table_pretty, wilcoxon_signed_rank, EmbeddingIndex, Hit,
    IndexModality, MetricReport, Ranking, RelevanceMap, TableRow, TextDoc, ToyTextEncoder, WilcoxonMethod,
};
use atr_core::trainer::{
    ablate as run_ablation, ablation_csv, caption_id, evaluate, parse_grid, read_embeddings, train as run_training,
    write_embeddings, AblationAxis, Checkpoint, Split,
};
use atr_core::{Error, Result};
use serde::Deserialize;

use crate::data::{load_config, load_data, read_per_query, snr_spec};
use crate::{AblateArgs, BaselineArgs, Direction, EvalArgs, IndexArgs, Method, ModalityArg, PreprocessArgs, SearchArgs, TrainArgs};

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::data(format!("checkpoint {} not found", path.display())));
    }
    Checkpoint::load(path)
}

pub fn preprocess(a: &PreprocessArgs) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.input)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", a.input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::data(format!("no .wav files in {}", a.input.display())));
    }
    let encoder = ToyEncoder::new(a.encoder_seed, a.d_model)?;
    let mut config = PreprocessConfig {
        chunk_len_s: a.chunk_len,
        ..PreprocessConfig::default()
    };
    config.silence.min_gap_s = a.silence_gap;
    let noise = snr_spec(&a.noise);

    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    let mut sidecar = String::from("clip,chunks,file\n");
    for (clip, file) in files.iter().enumerate() {
        let at = |e: Error| Error::data(format!("{}: {e}", file.display()));
        let wave = read_wav(file)?;
        let encoded = match &noise {
            None => encode_clip(&wave, &encoder, &config).map_err(at)?,
            Some(spec) => {
                let trimmed = remove_silence(&wave, &config.silence).map_err(at)?;
                let per_clip = SnrSpec {
                    seed: spec.seed.wrapping_add(clip as u64),
                    ..spec.clone()
                };
                let n = per_clip.source.render(trimmed.len(), trimmed.sample_rate(), per_clip.seed)?;
                let mixed = mix_noise(&trimmed, &n, &per_clip)?;
                encode_chunks(&chunk(&mixed, config.chunk_len_s)?, &encoder)?
            }
        };
        for r in 0..encoded.rows() {
            ids.push(caption_id(clip as u64, r)?);
            rows.push(encoded.row(r).to_vec());
        }
        let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(sidecar, "{clip},{},{}", encoded.rows(), csv_cell(&name));
    }
    write_embeddings(&a.out, &ids, &Tensor2D::from_rows(&rows)?)?;
    std::fs::write(sibling(&a.out, ".ids.csv"), sidecar)?;
    Ok(format!("{} clips, {} chunks -> {}\n", files.len(), ids.len(), a.out.display()))
}

pub fn train(a: &TrainArgs) -> Result<String> {
    let config = load_config(a.config.as_deref())?;
    let data = load_data(&a.data, &config)?;
    let outcome = run_training(config, &data)?;
    outcome.best.save(&a.out)?;
    outcome.last.save(&sibling(&a.out, ".last"))?;
    std::fs::write(sibling(&a.out, ".steps.csv"), outcome.log.steps_csv())?;
    std::fs::write(sibling(&a.out, ".epochs.csv"), outcome.log.epochs_csv())?;
    Ok(format!(
        "{} epochs ({}), best epoch {} with validation mAP@10 {:.4} -> {}\n",
        outcome.last.epoch,
        if outcome.stopped_early { "early stop" } else { "epoch limit" },
        outcome.best.best_epoch,
        outcome.best.best_metric,
        a.out.display()
    ))
}

pub fn index(a: &IndexArgs) -> Result<String> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let data = load_data(&a.data, &ckpt.config)?;
    let split: Option<Split> = a.split.as_deref().map(str::parse).transpose()?;
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for it in data.items.iter().filter(|it| split.map_or(true, |s| it.split == s)) {
        match a.modality {
            ModalityArg::Audio => {
                ids.push(it.id);
                rows.push(embed_single(&it.audio, Modality::Audio, &ckpt.params)?);
            }
            ModalityArg::Text => {
                for c in &it.captions {
                    ids.push(c.id);
                    rows.push(embed_single(&c.seq, Modality::Text, &ckpt.params)?);
                }
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::data("nothing to index"));
    }
    write_embeddings(&a.out, &ids, &Tensor2D::from_rows(&rows)?)?;
    Ok(format!("{} embeddings -> {}\n", ids.len(), a.out.display()))
}

pub fn search(a: &SearchArgs, csv: bool) -> Result<String> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let (ids, vectors) = read_embeddings(&a.index)?;
    let cfg = &ckpt.config;
    let d_model = cfg.refiner.d_model;
    let (query, target) = if a.query.to_ascii_lowercase().ends_with(".wav") {
        let path = Path::new(&a.query);
        if !path.exists() {
            return Err(Error::data(format!("query audio {} not found", path.display())));
        }
        let seq = encode_clip(&read_wav(path)?, &ToyEncoder::new(cfg.encoder_seed, d_model)?, &PreprocessConfig::default())?;
        (embed_single(&seq, Modality::Audio, &ckpt.params)?, IndexModality::Text)
    } else {
        let seq = ToyTextEncoder::new(cfg.encoder_seed, d_model).sequence(&a.query)?;
        (embed_single(&seq, Modality::Text, &ckpt.params)?, IndexModality::Audio)
    };
    let index = EmbeddingIndex::from_unnormalized(ids, &vectors, target)?;
    let hits = index.search(&query, a.k.min(index.len()))?;
    Ok(hits_table(&[(None, hits)], csv))
}

fn hits_table(groups: &[(Option<u64>, Vec<Hit>)], csv: bool) -> String {
    let with_query = groups.iter().any(|(q, _)| q.is_some());
    let mut out = String::new();
    if csv {
        out.push_str(if with_query { "query,rank,id,score\n" } else { "rank,id,score\n" });
    } else {
        let _ = writeln!(out, "{}{:>4}  {:>20}  {:>9}", if with_query { format!("{:>20}  ", "query") } else { String::new() }, "rank", "id", "score");
    }
    for (q, hits) in groups {
        for (r, h) in hits.iter().enumerate() {
            let q = q.map(|q| q.to_string());
            if csv {
                let _ = writeln!(out, "{}{},{},{:.6}", q.map(|q| q + ",").unwrap_or_default(), r + 1, h.id, h.score);
            } else {
                let q = q.map(|q| format!("{q:>20}  ")).unwrap_or_default();
                let _ = writeln!(out, "{q}{:>4}  {:>20}  {:>9.6}", r + 1, h.id, h.score);
            }
        }
    }
    out
}

fn data_label(data: &str) -> String {
    match data.strip_prefix("synthetic:") {
        Some(_) => "synthetic".into(),
        None => Path::new(data).file_stem().map_or(data.into(), |s| s.to_string_lossy().into_owned()),
    }
}

pub fn eval(a: &EvalArgs, csv: bool) -> Result<String> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let data = load_data(&a.data, &ckpt.config)?;
    let split: Split = a.split.parse()?;
    if data.split(split).is_empty() {
        return Err(Error::data(format!("split {} is empty", a.split)));
    }
    let noise = snr_spec(&a.noise);
    let ev = evaluate(&ckpt.params, &data, split, noise.as_ref())?;

    let mut reports: Vec<(&str, &MetricReport)> = Vec::new();
    if a.direction != Direction::T2a {
        reports.push(("a2t", &ev.a2t));
    }
    if a.direction != Direction::A2t {
        reports.push(("t2a", &ev.t2a));
    }
    let label = match noise {
        Some(s) => format!("{} ({} dB)", data_label(&a.data), s.snr_db),
        None => data_label(&a.data),
    };
    let rows: Vec<TableRow> = reports
        .iter()
        .map(|(dir, r)| TableRow {
            model: "refiner".into(),
            dataset: label.clone(),
            modality: (*dir).into(),
            report: (*r).clone(),
        })
        .collect();
    let mut out = if csv { table_csv(&rows) } else { table_pretty(&rows) };

    if let Some(path) = &a.dump_attention {
        let mut s = String::from("clip,chunk,weight\n");
        for (clip, w) in &ev.attention {
            for (j, x) in w.iter().enumerate() {
                let _ = writeln!(s, "{clip},{j},{x}");
            }
        }
        std::fs::write(path, s)?;
    }
    if let Some(path) = &a.per_query {
        let mut s = String::from("direction,query,ap\n");
        for (dir, r) in &reports {
            for (q, ap) in &r.per_query_ap {
                let _ = writeln!(s, "{dir},{q},{ap}");
            }
        }
        std::fs::write(path, s)?;
    }
    if let Some(path) = &a.significance {
        if csv {
            out.push_str("direction,n,w_plus,w_minus,statistic,p_value,method\n");
        }
        for (dir, r) in &reports {
            let baseline: std::collections::HashMap<u64, f64> = read_per_query(path, dir)?.into_iter().collect();
            let mut ours = Vec::new();
            let mut theirs = Vec::new();
            for (q, ap) in &r.per_query_ap {
                let b = baseline
                    .get(q)
                    .ok_or_else(|| Error::data(format!("{}: no {dir} entry for query {q}", path.display())))?;
                ours.push(*ap);
                theirs.push(*b);
            }
            let w = wilcoxon_signed_rank(&ours, &theirs)?;
            let method = match w.method {
                WilcoxonMethod::Exact => "exact",
                WilcoxonMethod::NormalApprox => "normal",
            };
            if csv {
                let _ = writeln!(out, "{dir},{},{},{},{},{},{method}", w.n_effective, w.w_plus, w.w_minus, w.statistic, w.p_value);
            } else {
                let _ = writeln!(
                    out,
                    "{dir} vs baseline: n={} W+={} W-={} p={:.4e} ({method})",
                    w.n_effective, w.w_plus, w.w_minus, w.p_value
                );
            }
        }
    }
    Ok(out)
}

pub fn ablate(a: &AblateArgs, csv: bool) -> Result<String> {
    let config = load_config(a.config.as_deref())?;
    let axis: AblationAxis = a.axis.parse()?;
    let grid = match &a.grid {
        Some(g) => parse_grid(g),
        None => axis.default_grid(),
    };
    if grid.is_empty() {
        return Err(Error::usage("empty grid"));
    }
    let data = load_data(&a.data, &config)?;
    let rows = run_ablation(&config, &data, axis, &grid);
    let text = ablation_csv(&rows);
    if let Some(path) = &a.out {
        std::fs::write(path, &text)?;
    }
    if csv {
        return Ok(text);
    }
    let mut out = format!("{:<14}  {:>7} {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7} {:>7}  {:>4}  status\n", "value", "a2t@1", "@5", "@10", "mAP", "t2a@1", "@5", "@10", "mAP", "best");
    for r in &rows {
        match &r.outcome {
            Ok((ev, best)) => {
                let v: Vec<String> = ev.a2t.values().iter().chain(ev.t2a.values().iter()).map(|x| format!("{x:>7.4}")).collect();
                let _ = writeln!(out, "{:<14}  {}  {}  {best:>4}  ok", r.value, v[..4].join(" "), v[4..].join(" "));
            }
            Err(e) => {
                let _ = writeln!(out, "{:<14}  error: {e}", r.value);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRecord {
    id: u64,
    text: String,
    #[serde(default)]
    relevant: Option<Vec<u64>>,
}

fn read_text_records(path: &Path) -> Result<Vec<TextRecord>> {
    if !path.exists() {
        return Err(Error::data(format!("{} not found", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect()
}

pub fn baseline(a: &BaselineArgs, csv: bool) -> Result<String> {
    let captions = read_text_records(&a.captions)?;
    let queries = read_text_records(&a.queries)?;
    if captions.is_empty() || queries.is_empty() {
        return Err(Error::data("captions and queries must both be nonempty"));
    }
    let corpus: Vec<TextDoc> = captions.iter().map(|c| TextDoc::new(c.id, c.text.clone())).collect();
    let encoder = ToyTextEncoder::new(a.encoder_seed, a.d_model);
    let embed = |s: &str| encoder.embed(s);
    let depth = a.k.max(10);
    let mut groups = Vec::new();
    let mut rankings = Vec::new();
    for q in &queries {
        let doc = TextDoc::new(q.id, q.text.clone());
        let hits = match a.method {
            Method::Lexical => lexical_search(&doc, &corpus, depth),
            Method::Bm25 => bm25_search(&doc, &corpus, depth, a.k1, a.b),
            Method::Semantic => semantic_search(&q.text, &corpus, &embed, depth),
        }
        .map_err(|e| Error::data(format!("query {}: {e}", q.id)))?;
        rankings.push(Ranking {
            query: q.id,
            docs: hits.iter().map(|h| h.id).collect(),
        });
        groups.push((Some(q.id), hits.into_iter().take(a.k).collect::<Vec<_>>()));
    }
    let mut out = hits_table(&groups, csv);
    if queries.iter().all(|q| q.relevant.is_some()) {
        let mut rel = RelevanceMap::new();
        for q in &queries {
            for &d in q.relevant.as_deref().unwrap_or_default() {
                rel.insert(q.id, d);
            }
        }
        let row = TableRow {
            model: format!("{:?}", a.method).to_lowercase(),
            dataset: data_label(&a.queries.to_string_lossy()),
            modality: "t2t".into(),
            report: MetricReport::from_rankings(&rankings, &rel)?,
        };
        out.push('\n');
        out.push_str(&if csv { table_csv(&[row]) } else { table_pretty(&[row]) });
    }
    Ok(out)
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
