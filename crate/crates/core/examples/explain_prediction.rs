//! Lead-wise Grad-CAM on a synthetic ST-elevation record: per-lead attention
//! scores, the share of explanation mass inside the generator's evidence
//! mask, an SVG overlay, and the classifier randomization check.
//!
//! ```text
//! cargo run --release --example explain_prediction -- [checkpoint]
//! ```

use leadwise::data::{LeadSelection, SynthClass};
use leadwise::explain::{explain_batch_with, mass_inside, render_explanation, sanity_check, CamScore};
use leadwise::training::predict_probs;

mod common;

fn main() -> leadwise::Result<()> {
    let (records, data) = common::synthetic(80, 11)?;
    let mut model = common::model_from_args_or_train(&data)?;

    let st_up = SynthClass::ALL.iter().position(|&c| c == SynthClass::StUp).unwrap();
    let row = data.labels.iter().position(|l| l[0] == st_up).unwrap();
    let x = data.inputs.select_rows(&[row]);
    let probs = predict_probs(&mut model, &x, 1)?;
    println!("record {}: class probabilities {:.3?}", data.ids[row], probs[0]);

    let leads = LeadSelection::default();
    for score in [CamScore::Logit, CamScore::LogProb] {
        let e = explain_batch_with(&mut model, &x, &[st_up], score)?.remove(0);
        println!(
            "{score:>8}: alpha {:.3?}, mass inside evidence {:.3}",
            e.alpha,
            mass_inside(&e, &records[row].evidence)
        );
        if score == CamScore::Logit {
            let path = std::env::temp_dir().join("leadwise-st-up.svg");
            render_explanation(&path, &x, &e, &leads.0, "ST elevation explained")?;
            println!("overlay written to {}", path.display());
        }
    }

    let rows: Vec<usize> = (0..data.len()).take(40).collect();
    let sub = data.subset(&rows);
    let classes: Vec<usize> = sub.labels.iter().map(|l| l[0]).collect();
    let report = sanity_check(&model, &sub.inputs, &sub.ids, &classes, CamScore::Logit, 1, 8)?;
    println!(
        "randomized classifier: mean Spearman rho {:.3} over {} maps ({} constant)",
        report.mean_rho(),
        report.entries.len(),
        report.undefined_count()
    );
    Ok(())
}
