use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use kgchain_core::gateway::{parse_response, Bindings, ParseError, Payload, RetrievedEntity, TemplateName};

fn fixture(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel);
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn bindings(name: TemplateName) -> Bindings {
    let raw: BTreeMap<String, String> =
        serde_json::from_str(&fixture(&format!("prompts/{}.bindings.json", name.as_str()))).unwrap();
    raw
}

#[test]
fn every_template_renders_byte_exact() {
    for name in TemplateName::ALL {
        let rendered = name.template().render(&bindings(name)).unwrap();
        let expected = fixture(&format!("prompts/{}.expected.txt", name.as_str()));
        assert_eq!(rendered.as_bytes(), expected.as_bytes(), "{name}");
    }
}

#[test]
fn spot_lines_survive_verbatim() {
    let body = |t: TemplateName| t.body();
    assert!(body(TemplateName::RecommendEntities).contains("Return your answer in JSON format only"));
    assert!(body(TemplateName::RetrieveByHypothesis).contains("return **15–20 entities**"));
    assert!(body(TemplateName::RecommendEntities).contains("return 5–7 of the most relevant entities"));
    assert!(body(TemplateName::AnalyzeImproveChain).contains("Chain Assessment"));
}

#[test]
fn rendering_keeps_braces_in_values_literal() {
    let t = TemplateName::GeneralResponse;
    let rendered = t.template().render(&bindings(t)).unwrap();
    assert!(rendered.contains(r#"{"note": "braces stay literal"}"#));
}

fn expected_entities() -> Vec<RetrievedEntity> {
    [
        ("BRCA1", "Gene", "DNA repair gene frequently lost in breast cancer."),
        (
            "PARP1",
            "Gene",
            "Base-excision repair enzyme; synthetic lethal with BRCA loss.",
        ),
        ("Olaparib", "Drug", "PARP inhibitor."),
    ]
    .iter()
    .map(|(n, c, d)| RetrievedEntity {
        entity_name: n.to_string(),
        category: c.to_string(),
        description: d.to_string(),
    })
    .collect()
}

#[test]
fn well_formed_retrieval_response() {
    let parsed = parse_response(
        TemplateName::RetrieveByHypothesis,
        &fixture("responses/retrieve_wellformed.txt"),
    )
    .unwrap();
    assert_eq!(parsed.payload, Payload::RetrievedEntities(expected_entities()));
    // three entities is below the requested 15–20
    assert_eq!(parsed.warnings.len(), 1);
}

#[test]
fn prose_wrapped_retrieval_response() {
    let parsed = parse_response(
        TemplateName::RetrieveByHypothesis,
        &fixture("responses/retrieve_prose_wrapped.txt"),
    )
    .unwrap();
    assert_eq!(parsed.payload, Payload::RetrievedEntities(expected_entities()));
}

#[test]
fn missing_key_is_reported_with_position() {
    let err = parse_response(
        TemplateName::RetrieveByHypothesis,
        &fixture("responses/retrieve_missing_key.txt"),
    )
    .unwrap_err();
    assert_eq!(
        err,
        ParseError::MissingKey {
            index: 1,
            key: "description"
        }
    );
}

#[test]
fn chain_analysis_transcript_has_all_sections() {
    let parsed = parse_response(
        TemplateName::AnalyzeImproveChain,
        &fixture("responses/analyze_chain_transcript.md"),
    )
    .unwrap();
    let Payload::ChainAnalysis(a) = parsed.payload else {
        panic!("expected chain analysis");
    };
    assert!(a.chain_assessment.contains("replication-stress"));
    assert!(a.biological_interpretation.contains("PARP-mediated repair"));
    assert!(a.suggested_improvements.contains("RAD51"));
}

#[test]
fn chain_analysis_without_sections_is_rejected() {
    let err = parse_response(TemplateName::AnalyzeImproveChain, "Looks fine to me.").unwrap_err();
    assert!(matches!(err, ParseError::MissingSection(_)));
}
