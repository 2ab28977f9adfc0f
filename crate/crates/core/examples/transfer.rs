//! Moves trained weights between variants: the full model's checkpoint
//! loses its knowledge parameters when converted to the baseline, and the
//! baseline gains freshly seeded ones going the other way.
//!
//!     cargo run --release --example transfer

use kvqa::data::{gen_synthetic, SyntheticSpec};
use kvqa::features::FeatureDims;
use kvqa::model::{encode_instance, is_knowledge_param, ModelConfig, TrainExample, Variant};
use kvqa::run::{accuracy, fit, transfer_params, FitSettings};

fn main() -> kvqa::Result<()> {
    let dims = FeatureDims {
        contextual: 128,
        subword: 64,
        region: 64,
    };
    let data = gen_synthetic(&SyntheticSpec::default(), &dims)?;
    let config = |variant| ModelConfig {
        variant,
        d_model: 64,
        n_heads: 8,
        n_layers: 2,
        validity_hidden: 128,
        dims,
        ..ModelConfig::default()
    };
    let full = config(Variant::Ektvqa);
    let base = config(Variant::Tvqa);

    let train = data
        .train
        .iter()
        .map(|i| {
            Ok(TrainExample::new(
                encode_instance(i, Some(&data.kb), &full)?,
                &data.vocab,
                full.max_steps,
            ))
        })
        .collect::<kvqa::Result<Vec<_>>>()?;
    let encode = |cfg: &ModelConfig, kb| {
        data.val
            .iter()
            .map(|i| encode_instance(i, kb, cfg))
            .collect::<kvqa::Result<Vec<_>>>()
    };
    let settings = FitSettings {
        lr: 3e-4,
        epochs: 20,
        ..FitSettings::default()
    };
    let result = fit(
        &full,
        &settings,
        &data.vocab,
        &train,
        &encode(&full, Some(&data.kb))?,
        None,
        |_| {},
    )?;
    println!("full model: {:.1}% at epoch {}", result.best_val, result.best_epoch);
    let trained = result.best;

    let stripped = transfer_params(&trained, &base, data.vocab.len())?;
    let dropped: Vec<&str> = trained.names().filter(|n| !stripped.contains(n)).collect();
    println!("dropped {} knowledge tensors: {dropped:?}", dropped.len());
    assert!(dropped.iter().all(|n| is_knowledge_param(n)));

    let val = encode(&base, None)?;
    println!(
        "baseline with transferred weights: {:.1}%",
        accuracy(&stripped, &base, &data.vocab, &val)?
    );

    let restored = transfer_params(&stripped, &full, data.vocab.len())?;
    println!("back to the full model: {} tensors", restored.names().count());
    Ok(())
}
