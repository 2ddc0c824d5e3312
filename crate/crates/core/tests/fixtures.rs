use std::path::PathBuf;

use cgw_core::corpus_io::{
    from_json, parse_annotation_tsv, parse_transcript, to_json, write_annotation_tsv,
    write_transcript,
};
use cgw_core::heuristics::{self, HeuristicConfig};
use cgw_core::similarity::LexicalSimilarity;
use cgw_core::{CgKind, Speaker};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn formats_agree_on_reilly() {
    let grid = parse_annotation_tsv("reilly", &read("reilly.cga.tsv")).unwrap();
    let doc = from_json(read("reilly.cg.json").as_bytes()).unwrap();
    assert_eq!(grid, doc);
    assert_eq!(parse_transcript(&read("reilly.txt")).unwrap(), grid.utterances());
}

#[test]
fn every_fixture_round_trips_byte_for_byte() {
    let tsv = read("reilly.cga.tsv");
    assert_eq!(write_annotation_tsv(&parse_annotation_tsv("reilly", &tsv).unwrap()).unwrap(), tsv);
    let json = read("reilly.cg.json");
    assert_eq!(to_json(&from_json(json.as_bytes()).unwrap()), json.as_bytes());
    let txt = read("reilly.txt");
    assert_eq!(write_transcript(&parse_transcript(&txt).unwrap()), txt);
}

#[test]
fn reilly_replay_and_prediction() {
    let s = from_json(read("reilly.cg.json").as_bytes()).unwrap();
    for sp in Speaker::BOTH {
        let kinds: Vec<(String, CgKind)> =
            s.cg_state(sp, 2).into_iter().map(|(e, l)| (e.to_string(), l.kind())).collect();
        assert_eq!(
            kinds,
            vec![("e1".into(), CgKind::Ja), ("e2".into(), CgKind::Rt), ("e3".into(), CgKind::Ja)]
        );
    }
    assert!(s.validate().is_empty());

    let p = heuristics::predict_dialogue(&s, &LexicalSimilarity, HeuristicConfig::default()).unwrap();
    for e in &p.events {
        for sp in Speaker::BOTH {
            assert_eq!(e.label.kind(), s.final_cg(&e.event, sp).unwrap().kind(), "{}", e.event);
        }
    }
    let applied = heuristics::apply_prediction(&s, &p).unwrap();
    assert!(applied.validate().is_empty());
}
