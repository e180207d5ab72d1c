//! Preprocessing a 12-lead record into the model's `3 x 5000` input: lead
//! selection by name, zero padding of short records, truncation of long
//! ones, and per-lead standardization that leaves the padding at zero.

use leadwise::data::{preprocess, synth_records, LeadSelection, Normalization, SynthClass, SynthSpec, STANDARD_LEADS};

fn main() -> leadwise::Result<()> {
    let mut spec = SynthSpec::new(SynthClass::first(2)?, 1, 3);
    spec.leads = STANDARD_LEADS.iter().map(|l| l.to_string()).collect();
    let mut record = synth_records(&spec)?.remove(0).record;
    println!("record {} carries leads {}", record.id, record.leads.join(","));

    for selection in LeadSelection::chest_variants().into_iter().take(3) {
        let input = preprocess(&record, &selection, Normalization::Standardize)?;
        println!(
            "{:<12} -> rows {:?} of the standard order, first samples {:.3?}",
            selection.to_string(),
            selection.row_indices(),
            &input.x.lane(0, 2)[..3]
        );
    }

    for signal in &mut record.signals {
        signal.truncate(3200);
    }
    let short = preprocess(&record, &LeadSelection::default(), Normalization::Standardize)?;
    let lane = short.x.lane(0, 0);
    let mean = lane[..3200].iter().map(|&v| v as f64).sum::<f64>() / 3200.0;
    println!(
        "3200-sample record: retained mean {mean:.2e}, padded tail all zero: {}",
        lane[3200..].iter().all(|&v| v == 0.0)
    );

    let missing = LeadSelection::new("I", "II", "V9");
    println!("unknown lead name rejected: {}", missing.is_err());
    Ok(())
}
