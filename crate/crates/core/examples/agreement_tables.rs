//! Computes count-based agreement between two coders from their code and
//! theme counts alone.
//!
//! ```text
//! cargo run --example agreement_tables -- 67 59
//! ```

use anyhow::Result;
use thematica::agreement::{build_agreement_summary, cohens_kappa, overlap_percentage, share_percentage};

fn main() -> Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (a, b) = match args[..] {
        [a, b] => (a, b),
        _ => (67, 59),
    };
    let s = build_agreement_summary(a, b)?;
    println!("coder A {a} codes, coder B {b} codes, {} combined", s.total_combined);
    println!("  shares           {}% / {}%", s.share_a, s.share_b);
    println!("  difference       {} codes, {}%", s.difference_count, s.percentage_difference);
    println!("  similarity       {} codes, {}%", s.similarity_count, s.percentage_similarity);
    if !s.similarity_count_consistent {
        println!("  note: {} / {} does not round to {}%", s.similarity_count, s.total_combined, s.percentage_similarity);
    }

    println!("theme overlap: 15 shared of 23 = {}%, of 26 = {}%", overlap_percentage(15, 23)?, overlap_percentage(15, 26)?);
    println!("theme shares: 4 of 19 = {}%", share_percentage(4, 19)?);

    let x = [true, true, false, true, false, true, true, false];
    let y = [true, false, false, true, false, true, true, true];
    println!("kappa over a presence pattern: {:.3}", cohens_kappa(&x, &y)?);
    Ok(())
}
