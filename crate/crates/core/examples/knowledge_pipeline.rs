//! Lookup, filtering, multi-word binding and the three fact-selection
//! policies on a hand-made knowledge base.
//!
//!     cargo run --example knowledge_pipeline

use kvqa::features::{BBox, FeatureDims, OcrToken, QAInstance, VisualObject};
use kvqa::knowledge::pipeline::fact_rows;
use kvqa::knowledge::{prepare_knowledge, select_facts, KbEntry, KbRecord, KbSnapshot, SelectionPolicy};
use kvqa::model::{init_model_params, ModelConfig, Variant};

fn entry(name: &str, description: &str) -> KbEntry {
    KbEntry {
        name: name.into(),
        description: description.into(),
        attribute: String::new(),
    }
}

fn main() -> kvqa::Result<()> {
    let dims = FeatureDims::default();
    let kb = KbSnapshot::from_records([
        KbRecord {
            query: "york".into(),
            candidates: vec![
                entry("New York", "most populous city in the united states"),
                entry("York", "cathedral city in north yorkshire"),
                entry("Yorkshire terrier", "small dog breed"),
            ],
        },
        KbRecord {
            query: "coke".into(),
            candidates: vec![
                entry("Coca-Cola", "carbonated soft drink, also called coke"),
                entry("Coke (fuel)", "fuel made by heating coal, known as coke"),
                entry("Pepsi", "soft drink"),
            ],
        },
    ]);

    let bbox = |x: f64| BBox::new(x, 10.0, x + 30.0, 30.0, 400.0, 300.0);
    let instance = QAInstance {
        question_id: "demo".into(),
        image_id: "street".into(),
        question: "what drink is sold in this city".split(' ').map(String::from).collect(),
        objects: vec![
            VisualObject::new("bottle", bbox(200.0)?, None, &dims)?,
            VisualObject::new("taxi", bbox(20.0)?, None, &dims)?,
        ],
        ocr: ["i", "love", "new", "york", "coke"]
            .iter()
            .enumerate()
            .map(|(i, t)| OcrToken::new(t, bbox(40.0 * i as f64)?, i, None, &dims))
            .collect::<kvqa::Result<Vec<_>>>()?,
        answers: vec!["coke".into()],
    };

    let prepared = prepare_knowledge(&instance, &kb, &dims)?;
    let cfg = ModelConfig {
        variant: Variant::Ektvqa,
        ..ModelConfig::default()
    };
    let store = init_model_params(&cfg, 10)?;
    for policy in [
        SelectionPolicy::Contextual,
        SelectionPolicy::Random,
        SelectionPolicy::All,
    ] {
        println!("\n{policy:?}");
        let facts = select_facts(&prepared, policy, &store, 7, &dims)?;
        for row in fact_rows(&prepared, &facts) {
            println!(
                "  {:<9} bound {:?} candidates {:?} -> {}",
                row.token,
                row.bound_from,
                row.candidates,
                row.selected.as_deref().unwrap_or("-")
            );
        }
    }
    Ok(())
}
