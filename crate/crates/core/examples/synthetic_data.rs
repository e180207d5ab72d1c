//! Generates the synthetic four-class dataset, shows where each class puts
//! its evidence, and writes it to disk in the record/manifest format the CLI
//! reads.
//!
//! ```text
//! cargo run --release --example synthetic_data -- [out-dir]
//! ```

use std::path::PathBuf;

use leadwise::data::{synth_dataset, synth_records, SynthClass, SynthSpec};

fn main() -> leadwise::Result<()> {
    let spec = SynthSpec::new(SynthClass::first(4)?, 3, 7);
    for r in synth_records(&spec)?.iter().take(4) {
        let covered: usize = r.evidence.iter().map(|e| e.len()).sum();
        println!(
            "{:<14} labels {:?}  {} evidence ranges covering {covered} of {} samples, first {:?}",
            r.record.id,
            r.record.labels,
            r.evidence.len(),
            r.record.length(),
            r.evidence.first()
        );
    }
    for class in SynthClass::ALL {
        println!("{:<9} evidence window around each R peak: {:?}", class.name(), class.evidence_window());
    }

    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("leadwise-synth"));
    let manifest = synth_dataset(&spec, &out)?;
    println!("wrote {} records to {}", manifest.records.len(), out.display());
    Ok(())
}
