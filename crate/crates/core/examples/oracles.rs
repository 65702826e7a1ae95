//! Every worked number computed by a brute-force oracle and by the main code path.
//!
//! cargo run --example oracles

fn main() -> dynrisk::Result<()> {
    for row in dynrisk::worked::worked_examples()? {
        println!(
            "{:<34} expected {:>10} oracle {:>16.10} main {:>16.10} {}",
            row.name,
            row.expected.map(|e| format!("{e:.6}")).unwrap_or_else(|| "-".into()),
            row.oracle,
            row.main,
            if row.agree { "agree" } else { "DISAGREE" }
        );
    }
    Ok(())
}
