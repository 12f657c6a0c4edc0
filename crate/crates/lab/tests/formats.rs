use std::path::Path;

use proptest::prelude::*;
use scalab::modelio;
use scalab::pipeline::{train_attacker, Model};
use scalab::traceio::{read_traces, write_traces};
use scalab::{Attacker, LabError, PipelineConfig};
use scalab_core::aes::{first_round_program, AcquisitionRecord, LeakageModel, RoundProgramOptions};
use scalab_core::classifiers::Classifier;
use scalab_core::dataset::{acquire, standardize, Campaign, Dataset, KeyPolicy, Target};
use scalab_core::vm::assemble;

const KEY: [u8; 16] = *b"0123456789abcdef";

fn captured(count: usize) -> Dataset {
    let program = assemble(&first_round_program(&RoundProgramOptions::default())).unwrap();
    acquire(Target::Fixed(&program), &Campaign::new(count, KeyPolicy::Fixed(KEY), 5)).unwrap().dataset
}

fn encode(d: &Dataset) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_traces(&mut bytes, d).unwrap();
    bytes
}

#[test]
fn captured_traces_roundtrip_exactly() {
    let d = captured(20);
    assert_eq!(read_traces(encode(&d).as_slice()).unwrap(), d);
}

#[test]
fn corrupt_trace_files_are_rejected() {
    let bytes = encode(&captured(3));
    let mut magic = bytes.clone();
    magic[0] ^= 1;
    assert!(read_traces(magic.as_slice()).is_err());
    assert!(read_traces(&bytes[..bytes.len() - 3]).is_err());
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(read_traces(trailing.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_traces_roundtrip(
        n in 1usize..20,
        rows in prop::collection::vec((any::<[u8; 16]>(), prop::collection::vec(-1e4f32..1e4, 20)), 1..8),
    ) {
        let model = LeakageModel::default();
        let traces = rows.iter().flat_map(|(_, t)| t[..n].iter().map(|&v| f64::from(v))).collect();
        let records = rows.iter().map(|(p, _)| AcquisitionRecord::new(*p, KEY, &model)).collect();
        let d = Dataset::new(traces, records, model, n, KeyPolicy::Fixed(KEY)).unwrap();
        prop_assert_eq!(read_traces(encode(&d).as_slice()).unwrap(), d);
    }
}

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::parse(include_str!("../configs/small.conf")).unwrap();
    cfg.mlp.train.epochs = 1;
    cfg
}

fn profiling() -> Dataset {
    standardize(&captured(60)).unwrap().0
}

fn same_predictions(a: &dyn Classifier, b: &dyn Classifier, d: &Dataset) {
    for row in d.rows().take(10) {
        assert_eq!(a.predict(row).unwrap(), b.predict(row).unwrap());
    }
}

#[test]
fn network_file_roundtrip_keeps_predictions_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = captured(60);
    let (p, stats) = standardize(&d).unwrap();
    let Model::Network(net) = train_attacker(&tiny_config(), Attacker::Mlp, &p, 9).unwrap() else { panic!("network expected") };
    let r = modelio::save_stats(&dir.path().join("stats.json"), &stats).unwrap();
    let path = dir.path().join("mlp.model");
    modelio::save_network(&path, &net, Some(r)).unwrap();
    let back = modelio::load_network(&path).unwrap();
    assert_eq!(back.network, net.network);
    assert_eq!(back.stats.as_ref(), Some(&stats));
    same_predictions(&net, &back, &p);
}

#[test]
fn template_file_roundtrip_keeps_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let p = profiling();
    let Model::Template(ta) = train_attacker(&tiny_config(), Attacker::Ta, &p, 0).unwrap() else { panic!("template expected") };
    let path = dir.path().join("ta.template");
    modelio::save_template(&path, &ta, None).unwrap();
    let (back, stats) = modelio::load_template(&path).unwrap();
    assert!(stats.is_none());
    assert_eq!(back.n, ta.n);
    same_predictions(&ta, &back, &p);
}

#[test]
fn edited_stats_file_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let (p, stats) = standardize(&captured(30)).unwrap();
    let Model::Template(ta) = train_attacker(&tiny_config(), Attacker::Ta, &p, 0).unwrap() else { panic!("template expected") };
    let stats_path = dir.path().join("stats.json");
    let r = modelio::save_stats(&stats_path, &stats).unwrap();
    let path = dir.path().join("ta.template");
    modelio::save_template(&path, &ta, Some(r)).unwrap();
    let mut text = std::fs::read_to_string(&stats_path).unwrap();
    text.push(' ');
    std::fs::write(&stats_path, text).unwrap();
    assert!(matches!(modelio::load_template(&path), Err(LabError::Format { .. })));
}

#[test]
fn model_magic_is_checked() {
    let p = profiling();
    let Model::Template(ta) = train_attacker(&tiny_config(), Attacker::Ta, &p, 0).unwrap() else { panic!("template expected") };
    let bytes = modelio::encode_template(&ta, None);
    assert!(modelio::decode_network(&bytes, Path::new("x")).is_err());
    assert!(modelio::decode_template(&bytes[..bytes.len() - 8], Path::new("x")).is_err());
}
