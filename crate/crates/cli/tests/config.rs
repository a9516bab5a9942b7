use advnas::config::{defaults_reference, ConfigDocument, LogFormat};
use advnas::CliError;
use advnas_core::estimators::EstimatorKind;
use advnas_core::search::{SearchConfig, TaskConfig};

#[test]
fn defaults_reference_loads_as_the_default_document() {
    let doc = ConfigDocument::parse(&defaults_reference()).unwrap();
    assert_eq!(doc, ConfigDocument::default());
}

#[test]
fn documents_round_trip() {
    let mut docs = vec![ConfigDocument::default()];
    for kind in EstimatorKind::ALL {
        let mut d = ConfigDocument::from_search(SearchConfig::linear(kind, 100));
        d.output.formats = vec![LogFormat::Jsonl, LogFormat::Csv];
        d.output.directory = Some("somewhere".into());
        docs.push(d);
    }
    let mut explicit = ConfigDocument::from_search(SearchConfig::linear(EstimatorKind::Reinforce, 10));
    if let TaskConfig::Linear(t) = &mut explicit.task {
        t.rewards = Some(vec![vec![0.5, -1.0], vec![2.0, 0.0, 1.0]]);
    }
    explicit.optimizer_theta.clip = Some(5.0);
    docs.push(explicit);
    for d in docs {
        let text = d.to_toml();
        let back = ConfigDocument::parse(&text).unwrap();
        assert_eq!(back, d, "{text}");
        assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn unknown_keys_are_rejected_in_every_section() {
    let base = ConfigDocument::default().to_toml();
    for section in ["[task]", "[strategy]", "[optimizer_w]", "[optimizer_theta]", "[run]", "[output]"] {
        let text = base.replace(section, &format!("{section}\nunexpected_key = 1"));
        match ConfigDocument::parse(&text) {
            Err(CliError::Config(m)) => assert!(m.contains("unexpected_key"), "{m}"),
            other => panic!("{section}: {other:?}"),
        }
    }
    assert!(ConfigDocument::parse(&(base + "\n[extra]\nx = 1\n")).is_err());
}

#[test]
fn overrides_are_validated() {
    let mut d = ConfigDocument::default();
    d.run.cadence = 10;
    d.validate().unwrap();
    assert!(matches!(d.apply(None, Some(15), None), Err(CliError::Config(_))));
    let mut d = ConfigDocument::default();
    d.apply(Some(EstimatorKind::GumbelSt), Some(7), Some(vec![3, 4])).unwrap();
    assert_eq!((d.strategy.kind, d.run.iterations, d.run.seeds.clone()), (EstimatorKind::GumbelSt, 7, vec![3, 4]));
}
