//! Generates the synthetic knowledge task and prints one instance with the
//! knowledge-base entries behind its scene-text tokens.
//!
//!     cargo run --example synthetic_task

use kvqa::data::{gen_synthetic, SyntheticSpec};
use kvqa::features::FeatureDims;
use kvqa::knowledge::kb_lookup;

fn main() -> kvqa::Result<()> {
    let dims = FeatureDims::default();
    let data = gen_synthetic(&SyntheticSpec::default(), &dims)?;
    println!(
        "{} train / {} val questions, {} answer words",
        data.train.len(),
        data.val.len(),
        data.vocab.len()
    );

    let inst = &data.train[0];
    println!("\nquestion {}: {}", inst.question_id, inst.question.join(" "));
    println!(
        "objects: {:?}",
        inst.objects.iter().map(|o| o.label.as_str()).collect::<Vec<_>>()
    );
    println!("answers: {:?}", inst.answers);
    for tok in &inst.ocr {
        let set = kb_lookup(&tok.text, &data.kb, dims.contextual)?;
        let names: Vec<&str> = set.candidates.iter().map(|c| c.name.as_str()).collect();
        println!("  ocr {:<12} -> {names:?}", tok.text);
    }
    Ok(())
}
