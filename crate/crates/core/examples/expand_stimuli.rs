//! Expand the bundled attachment templates with the bundled noun lists.
//!
//!     cargo run --release --example expand_stimuli

use rclab::lang::Language;
use rclab::stimuli::{default_items, default_nouns, default_templates, expand_attachment_templates};

fn main() -> rclab::Result<()> {
    for lang in [Language::English, Language::Spanish] {
        let templates = default_templates(lang);
        let nouns = default_nouns(lang);
        let pairs = expand_attachment_templates(&templates, &nouns, lang)?;
        println!(
            "{lang}: {} templates x {} nouns -> {} pairs, {} sentences",
            templates.len(),
            nouns.len(),
            pairs.len(),
            2 * pairs.len()
        );
        let p = &pairs[0];
        println!("  {} / target `{}`", p.high_agree.join(" "), p.target_token());
        println!("  {}", p.low_agree.join(" "));
        println!("  hand-written item set: {} pairs", default_items(lang).len());
    }
    Ok(())
}
