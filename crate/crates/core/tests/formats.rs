use std::fs;

use benignspoof_core::corpus::{self, CorpusError, ProcessingLabel, SourceLabel, Split, SplitConfig, UtteranceRecord};
use benignspoof_core::embeddings::{concat_sets, read_embfile, write_embfile, EmbeddingError, EmbeddingSet};
use proptest::prelude::*;
use tempfile::TempDir;

fn record(id: &str, source: SourceLabel, processing: ProcessingLabel, pair: &str, domain: &str) -> UtteranceRecord {
    UtteranceRecord {
        utt_id: id.into(),
        audio_path: Some(format!("{id}.wav")),
        source,
        processing,
        system: if source == SourceLabel::BonaFide { "human".into() } else { "tts".into() },
        pair_id: pair.into(),
        split: Split::Unassigned,
        domain: domain.into(),
    }
}

fn arb_corpus() -> impl Strategy<Value = Vec<UtteranceRecord>> {
    prop::collection::vec((any::<bool>(), 0usize..6, 0usize..3, "[a-z]{0,3}"), 4..60).prop_map(|specs| {
        let mut out = Vec::new();
        for (i, (spoof, proc_idx, domain, tag)) in specs.into_iter().enumerate() {
            let source = if spoof { SourceLabel::Spoofed } else { SourceLabel::BonaFide };
            let orig = format!("u{i}{tag}");
            let domain = format!("d{domain}");
            out.push(record(&orig, source, ProcessingLabel::None, "", &domain));
            if proc_idx > 0 {
                out.push(record(&format!("{orig}_p"), source, ProcessingLabel::ALL[proc_idx], &orig, &domain));
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_text_round_trips(records in arb_corpus()) {
        let mut text = Vec::new();
        corpus::write_manifest(&mut text, &records).unwrap();
        let back = corpus::parse_manifest_reader(&text[..]).unwrap();
        prop_assert_eq!(&back, &records);
        let mut again = Vec::new();
        corpus::write_manifest(&mut again, &back).unwrap();
        prop_assert_eq!(text, again);
    }

    #[test]
    fn splits_keep_pairs_together(records in arb_corpus(), seed in any::<u64>()) {
        let cfg = SplitConfig { seed, allow_small: true, ..Default::default() };
        let assigned = corpus::assign_splits(&records, &cfg).unwrap();
        prop_assert_eq!(assigned.len(), records.len());
        for r in assigned.iter().filter(|r| !r.pair_id.is_empty()) {
            let orig = assigned.iter().find(|o| o.utt_id == r.pair_id).unwrap();
            prop_assert_eq!(r.split, orig.split);
        }
    }

    #[test]
    fn emb1_file_round_trips(dim in 1usize..40, vectors in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 40), 0..30)) {
        let tmp = TempDir::new().unwrap();
        let mut set = EmbeddingSet::new("prop", dim).unwrap();
        for (i, v) in vectors.iter().enumerate() {
            set.push(format!("utt-{i}"), v[..dim].iter().map(|&x| x as f64).collect()).unwrap();
        }
        let path = tmp.path().join("prop.emb1");
        write_embfile(&path, &set).unwrap();
        let back = read_embfile(&path).unwrap();
        prop_assert_eq!(back.dim(), dim);
        prop_assert_eq!(back.ids(), set.ids());
        for (id, v) in set.iter() {
            prop_assert_eq!(back.get(id).unwrap(), v);
        }
        let copy = tmp.path().join("copy.emb1");
        write_embfile(&copy, &back).unwrap();
        prop_assert_eq!(fs::read(&path).unwrap(), fs::read(&copy).unwrap());
    }
}

#[test]
fn emb1_model_tag_comes_from_file_stem() {
    let tmp = TempDir::new().unwrap();
    let mut set = EmbeddingSet::new("ignored", 2).unwrap();
    set.push("a".into(), vec![1.0, 2.0]).unwrap();
    let path = tmp.path().join("wav2vec2.emb1");
    write_embfile(&path, &set).unwrap();
    assert_eq!(read_embfile(&path).unwrap().model_tag(), "wav2vec2");
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut set = EmbeddingSet::new("t", 3).unwrap();
    set.push("x".into(), vec![0.5, 0.25, 0.125]).unwrap();
    set.push("y".into(), vec![1.0, 2.0, 3.0]).unwrap();
    let path = tmp.path().join("t.emb1");
    write_embfile(&path, &set).unwrap();
    let bytes = fs::read(&path).unwrap();
    for cut in [2, 6, 12, bytes.len() - 1] {
        let p = tmp.path().join(format!("cut{cut}.emb1"));
        fs::write(&p, &bytes[..cut]).unwrap();
        assert!(matches!(read_embfile(&p), Err(EmbeddingError::TruncatedFile(_))), "cut at {cut}");
    }
    let mut foreign = bytes.clone();
    foreign[..4].copy_from_slice(b"NPY\0");
    let p = tmp.path().join("foreign.emb1");
    fs::write(&p, foreign).unwrap();
    assert!(matches!(read_embfile(&p), Err(EmbeddingError::BadMagic(_))));
}

#[test]
fn concatenation_requires_matching_ids() {
    let mk = |tag: &str, ids: &[&str], dim: usize| {
        let mut s = EmbeddingSet::new(tag, dim).unwrap();
        for id in ids {
            s.push(id.to_string(), vec![1.0; dim]).unwrap();
        }
        s
    };
    let joined = concat_sets(&[mk("a", &["p", "q"], 2), mk("b", &["q", "p"], 3)]).unwrap();
    assert_eq!(joined.dim(), 5);
    assert_eq!(joined.ids(), ["p", "q"]);
    assert!(matches!(concat_sets(&[mk("a", &["p"], 2), mk("b", &["r"], 2)]), Err(EmbeddingError::KeySetMismatch(_))));
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let good = record("a", SourceLabel::BonaFide, ProcessingLabel::None, "", "d").to_json_line();
    let dangling = record("b", SourceLabel::Spoofed, ProcessingLabel::Restoration, "a", "d").to_json_line();
    let text = format!("{good}\n\n{dangling}\n");
    match corpus::parse_manifest_reader(text.as_bytes()) {
        Err(CorpusError::DanglingPairId { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let dup = format!("{good}\n{good}\n");
    assert!(matches!(corpus::parse_manifest_reader(dup.as_bytes()), Err(CorpusError::DuplicateUttId { line: 2, .. })));
    let unknown = good.replace("\"none\"", "\"reverb\"");
    assert!(matches!(corpus::parse_manifest_reader(unknown.as_bytes()), Err(CorpusError::UnknownEnumValue { line: 1, .. })));
}
