//! Answer metrics and the composability upper bounds on a toy set.
//!
//!     cargo run --example metrics

use kvqa::eval::{anls, edit_distance, upper_bounds, vqa_accuracy, EvalRecord};
use kvqa::features::{BBox, FeatureDims, OcrToken, QAInstance};
use kvqa::model::AnswerVocab;

fn main() -> kvqa::Result<()> {
    for (a, b) in [("kitten", "sitting"), ("coca cola", "coca-cola"), ("", "abc")] {
        println!("edit_distance({a:?}, {b:?}) = {}", edit_distance(a, b));
    }

    let records = [
        EvalRecord::new("coca cola", &["coca cola"]),
        EvalRecord::new("coca col", &["coca cola"]),
        EvalRecord::new("pepsi", &["coca cola"]),
    ];
    for r in &records {
        println!("anls {:?} = {:.3}", r, anls(std::slice::from_ref(r), 0.5)?);
    }
    println!("mean anls = {:.3}", anls(&records, 0.5)?);

    let answers: Vec<String> = [
        "coke", "coke", "cola", "coke", "pepsi", "cola", "cola", "soda", "pop", "cola",
    ]
    .map(String::from)
    .to_vec();
    for guess in ["cola", "coke", "soda", "water"] {
        println!("vqa_accuracy({guess:?}) = {:.3}", vqa_accuracy(guess, &answers)?);
    }

    let dims = FeatureDims::default();
    let vocab = AnswerVocab::new(["yes", "no", "stop"]);
    let question = |id: &str, ocr: &[&str], answer: &str| -> kvqa::Result<QAInstance> {
        Ok(QAInstance {
            question_id: id.into(),
            image_id: id.into(),
            question: vec!["what".into()],
            objects: vec![],
            ocr: ocr
                .iter()
                .enumerate()
                .map(|(i, t)| OcrToken::new(t, BBox::full(100.0, 100.0), i, None, &dims))
                .collect::<kvqa::Result<_>>()?,
            answers: vec![answer.into()],
        })
    };
    let set = [
        question("a", &["new", "york"], "new york")?,
        question("b", &["stop"], "stop")?,
        question("c", &["cafe"], "yes")?,
        question("d", &["cafe"], "cafe stop")?,
    ];
    println!("{:?}", upper_bounds(&set, &vocab));
    Ok(())
}
