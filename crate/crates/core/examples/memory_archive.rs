//! Experience archive: store, rate, retrieve precedents, reload from disk.
//!
//! cargo run --example memory_archive

use netorch::memory::{Archive, NewRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("memory.jsonl");
    let mut archive = Archive::open(&path)?;

    for q in [
        "allocate bandwidth among 20 users for proportional fairness",
        "max-min sinr power control in 4 cells",
        "equal bandwidth split for 5 users",
        "maximize the product of sinr across 9 cells",
    ] {
        let id = archive.store_record(NewRecord { query_text: q.into(), ..NewRecord::default() })?;
        println!("stored #{id}: {q}");
    }
    archive.record_feedback(1, 1, "equal SINR as promised")?;

    let query = "power control for max-min fairness";
    println!("\nprecedents for `{query}`:");
    for hit in archive.retrieve(query, 3) {
        println!("  #{} score {:.3}: {}", hit.record.record_id, hit.score, hit.record.query_text);
    }

    let reloaded = Archive::open(&path)?;
    println!("\nreloaded {} records, index identical: {}", reloaded.len(), reloaded.canonical_index() == archive.canonical_index());
    println!("record #1 feedback: {:?}", reloaded.get(1).and_then(|r| r.feedback.as_ref()));
    Ok(())
}
