//! Browser bindings for three small interactive demos. Every export returns
//! a JSON string; failures come back as `{"error": "..."}`.

use fewtopic_core::classifier::TrainConfig;
use fewtopic_core::corpus::{bind, normalize_rows, DataCollection, EmbeddingMatrix, PassageRecord};
use fewtopic_core::dataset::NegStrategy;
use fewtopic_core::derive_seed;
use fewtopic_core::pipeline::{run_topic, sweep_cell, BuildConfig, SweepSettings};
use fewtopic_core::retrieval::mqr;
use fewtopic_core::synth::{SyntheticWorld, WorldConfig};
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn unit(deg: f64) -> Vec<f32> {
    let r = deg.to_radians();
    vec![r.cos() as f32, r.sin() as f32]
}

fn circle(passages: usize) -> Result<DataCollection, String> {
    let rows: Vec<Vec<f32>> = (0..passages)
        .map(|i| unit(360.0 * i as f64 / passages as f64))
        .collect();
    let m = EmbeddingMatrix::from_rows(&rows, 2)
        .and_then(|m| normalize_rows(&m))
        .map_err(|e| e.to_string())?;
    let records = (0..passages)
        .map(|i| PassageRecord {
            id: format!("p{i}"),
            text: String::new(),
            meta: None,
        })
        .collect();
    bind(records, m).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CirclePoint {
    angle: f64,
    kept: bool,
    /// Best cosine against any query among that query's top k, if ranked.
    best_score: Option<f64>,
}

pub fn mqr_circle_value(query_angles: &[f64], passages: usize, k: usize) -> Result<Value, String> {
    if passages == 0 || passages > 3600 {
        return Err("passages must be between 1 and 3600".into());
    }
    let c = circle(passages)?;
    let queries: Vec<Vec<f32>> = query_angles.iter().map(|&a| unit(a)).collect();
    let r = mqr(&c, &queries, k.min(passages)).map_err(|e| e.to_string())?;
    let mut best: Vec<Option<f64>> = vec![None; passages];
    for hits in &r.per_query_hits {
        for h in hits {
            let b = &mut best[h.passage_index];
            *b = Some(b.map_or(h.score, |s: f64| s.max(h.score)));
        }
    }
    let mut kept = vec![false; passages];
    for &i in &r.kept {
        kept[i] = true;
    }
    let points: Vec<CirclePoint> = (0..passages)
        .map(|i| CirclePoint {
            angle: 360.0 * i as f64 / passages as f64,
            kept: kept[i],
            best_score: best[i],
        })
        .collect();
    Ok(json!({
        "threshold": r.threshold,
        "threshold_angle": r.threshold.clamp(-1.0, 1.0).acos().to_degrees(),
        "kept": r.kept.len(),
        "per_query_kept": r.per_query_kept(),
        "points": points,
    }))
}

/// Multi-query retrieval over points spread evenly on the unit circle.
/// Reports the threshold (also as an angle) and which points are kept.
#[wasm_bindgen]
pub fn mqr_circle(query_angles: Vec<f64>, passages: usize, k: usize) -> String {
    respond(mqr_circle_value(&query_angles, passages, k))
}

fn demo_world(seed: u32, noise: f64, hard_negative_cosine: Option<f64>) -> SyntheticWorld {
    SyntheticWorld::new(WorldConfig {
        dim: 16,
        clusters: 6,
        per_cluster: 150,
        noise,
        hard_negative_cosine,
        seed: u64::from(seed),
    })
}

fn demo_train(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        max_epochs: 100,
        ..TrainConfig::default()
    }
}

pub fn strategy_demo_value(
    hard_negative_cosine: f64,
    noise: f64,
    seed: u32,
) -> Result<Value, String> {
    if !(-1.0..=1.0).contains(&hard_negative_cosine) || !(0.0..=1.0).contains(&noise) {
        return Err("cosine must lie in [-1, 1] and noise in [0, 1]".into());
    }
    let world = demo_world(seed, noise, Some(hard_negative_cosine));
    let (c, _) = world.corpus();
    let s = u64::from(seed);
    let qs = world.queryset(5, 3, s);
    let test = world.eval_set(100, 50, 50, derive_seed(s, 77));
    let mut rows = Vec::new();
    for strategy in [NegStrategy::M1, NegStrategy::M2, NegStrategy::M3] {
        let build = BuildConfig {
            k: 100,
            strategy,
            seed: s,
        };
        let run =
            run_topic(&c, &qs, &test, &build, 0.2, &demo_train(s)).map_err(|e| e.to_string())?;
        let fine = &run.report.per_fine_class_accuracy;
        rows.push(json!({
            "strategy": strategy.to_string(),
            "f1": run.report.f1,
            "accuracy": run.report.accuracy,
            "p": fine.get("P"),
            "en": fine.get("EN"),
            "hn": fine.get("HN"),
            "examples": run.diagnostics.examples,
            "best_epoch": run.training.history.best_epoch,
            "val_loss": run.training.history.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>(),
        }));
    }
    Ok(json!({ "strategies": rows }))
}

/// Trains one classifier per negative strategy on a world with a
/// hard-negative cluster and reports per-class accuracy and loss curves.
#[wasm_bindgen]
pub fn strategy_demo(hard_negative_cosine: f64, noise: f64, seed: u32) -> String {
    respond(strategy_demo_value(hard_negative_cosine, noise, seed))
}

pub fn sweep_demo_value(
    query_counts: &[u32],
    ks: &[u32],
    noise: f64,
    seed: u32,
) -> Result<Value, String> {
    if query_counts.is_empty() || ks.is_empty() || query_counts.len() * ks.len() > 36 {
        return Err("grid must have between 1 and 36 cells".into());
    }
    let world = demo_world(seed, noise, None);
    let (c, _) = world.corpus();
    let s = u64::from(seed);
    let max_n = query_counts.iter().copied().max().unwrap_or(2) as usize;
    let pool = world.queryset(max_n.max(2), 0, s);
    let test = world.eval_set(100, 100, 0, derive_seed(s, 77));
    let settings = SweepSettings {
        strategy: NegStrategy::M1,
        val_ratio: 0.2,
        train: demo_train(s),
    };
    let mut index = 0u64;
    let mut table = Vec::new();
    for &n in query_counts {
        let mut row = Vec::new();
        for &k in ks {
            let cell = sweep_cell(
                &c,
                &pool,
                &test,
                n as usize,
                k as usize,
                s + index,
                &settings,
            );
            index += 1;
            row.push(json!({ "accuracy": cell.accuracy, "m": cell.m, "error": cell.error }));
        }
        table.push(row);
    }
    Ok(json!({ "query_counts": query_counts, "ks": ks, "cells": table }))
}

/// Accuracy over a small grid of query counts and retrieval depths.
#[wasm_bindgen]
pub fn sweep_demo(query_counts: Vec<u32>, ks: Vec<u32>, noise: f64, seed: u32) -> String {
    respond(sweep_demo_value(&query_counts, &ks, noise, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_threshold_matches_angle() {
        let v = mqr_circle_value(&[0.0, 60.0], 360, 90).unwrap();
        assert!((v["threshold"].as_f64().unwrap() - 0.5).abs() < 1e-6);
        assert!((v["threshold_angle"].as_f64().unwrap() - 60.0).abs() < 1e-4);
        let points = v["points"].as_array().unwrap();
        let kept_angles: Vec<f64> = points
            .iter()
            .filter(|p| p["kept"] == true)
            .map(|p| p["angle"].as_f64().unwrap())
            .collect();
        // every kept point lies within 60 degrees of some query
        assert!(kept_angles
            .iter()
            .all(|&a| a <= 120.0 + 1e-9 || a >= 300.0 - 1e-9));
        assert!(kept_angles.contains(&30.0));
    }

    #[test]
    fn errors_come_back_as_json() {
        let s = mqr_circle(vec![10.0], 100, 5);
        let v: Value = serde_json::from_str(&s).unwrap();
        assert!(v["error"].as_str().unwrap().contains("2 "));
        let v: Value = serde_json::from_str(&mqr_circle(vec![0.0, 1.0], 0, 5)).unwrap();
        assert!(v.get("error").is_some());
    }

    #[test]
    fn strategy_demo_reports_three_rows() {
        let v = strategy_demo_value(0.8, 0.1, 3).unwrap();
        let rows = v["strategies"].as_array().unwrap();
        assert_eq!(rows.len(), 3);
        for r in rows {
            assert!(!r["val_loss"].as_array().unwrap().is_empty());
            assert!(r["hn"].as_f64().is_some());
        }
        assert!(rows[1]["hn"].as_f64() > rows[0]["hn"].as_f64());
    }

    #[test]
    fn sweep_demo_fills_the_grid() {
        let v = sweep_demo_value(&[2, 5], &[10, 50], 0.1, 1).unwrap();
        let cells = v["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|r| r.as_array().unwrap().len() == 2));
        assert!(cells[1][1]["accuracy"].as_f64().unwrap() > 0.8);
        assert!(sweep_demo_value(&[], &[10], 0.1, 1).is_err());
    }
}
