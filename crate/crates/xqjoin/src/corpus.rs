//! Bundled test documents and queries used by the golden, differential, and
//! acceptance suites, plus a deterministic generator for a larger
//! benchmark-shaped document.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::infoset::{shred, DocTable, NodeKind};

/// The running example document.
pub const AUCTION_XML: &str = include_str!("../corpus/auction.xml");

/// Overlapping same-tag nesting; stresses duplicate removal after
/// descendant steps.
pub const NESTED_XML: &str = include_str!("../corpus/nested.xml");

/// A small benchmark-shaped document with references and typed values.
pub const SITE_XML: &str = include_str!("../corpus/site.xml");

/// The running example query: auctions that have at least one bidder.
pub const Q1: &str = r#"doc("auction.xml")/descendant::open_auction[bidder]"#;

pub fn auction_doc() -> DocTable {
    shred(AUCTION_XML, "auction.xml", 0).expect("bundled document is well-formed")
}

pub fn nested_doc() -> DocTable {
    shred(NESTED_XML, "nested.xml", 0).expect("bundled document is well-formed")
}

pub fn site_doc() -> DocTable {
    shred(SITE_XML, "site.xml", 0).expect("bundled document is well-formed")
}

/// The three small corpus documents with their URIs.
pub fn small_docs() -> Vec<(&'static str, DocTable)> {
    vec![
        ("auction.xml", auction_doc()),
        ("nested.xml", nested_doc()),
        ("site.xml", site_doc()),
    ]
}

/// Element and attribute names occurring in a document, for name tests.
pub fn tag_vocabulary(doc: &DocTable) -> Vec<String> {
    let mut names = BTreeSet::new();
    for r in &doc.rows {
        if matches!(r.kind, NodeKind::Elem | NodeKind::Attr) {
            if let Some(n) = &r.name {
                names.insert(n.clone());
            }
        }
    }
    names.into_iter().collect()
}

/// String and decimal literals occurring in a document, for comparisons.
pub fn literal_vocabulary(doc: &DocTable) -> (Vec<String>, Vec<f64>) {
    let mut strs = BTreeSet::new();
    let mut decs = BTreeSet::new();
    for r in &doc.rows {
        if let Some(v) = &r.value {
            strs.insert(v.clone());
        }
        if let Some(d) = r.data {
            decs.insert(d.to_bits());
        }
    }
    (strs.into_iter().take(12).collect(), decs.into_iter().take(12).map(f64::from_bits).collect())
}

/// Generates a benchmark-shaped auction site document of roughly
/// `target_bytes` bytes, deterministically.
pub fn generate_site_xml(target_bytes: usize) -> String {
    let mut out = String::with_capacity(target_bytes + 4096);
    out.push_str("<site>\n<regions>\n");
    let mut i = 0usize;
    let regions = ["africa", "asia", "europe", "namerica"];
    let adjectives = ["great", "plain", "odd", "rare", "cheap", "heavy"];
    let nouns = ["chair", "vase", "bicycle", "lamp", "stamp", "drum"];
    while out.len() < target_bytes * 2 / 5 {
        let region = regions[i % regions.len()];
        let _ = write!(
            out,
            "<{region}><item id=\"item{i}\"><name>{} {}</name><price>{}.{:02}</price>\
             <quantity>{}</quantity></item></{region}>\n",
            adjectives[i % adjectives.len()],
            nouns[(i / 3) % nouns.len()],
            10 + (i * 37) % 990,
            i % 100,
            1 + i % 5,
        );
        i += 1;
    }
    out.push_str("</regions>\n<open_auctions>\n");
    let mut a = 0usize;
    while out.len() < target_bytes {
        let _ = write!(out, "<open_auction id=\"auction{a}\"><itemref item=\"item{}\"/><initial>{}</initial>", a % i.max(1), 5 + (a * 13) % 500);
        // Roughly two thirds of the auctions have bidders.
        for b in 0..(a % 3) {
            let _ = write!(
                out,
                "<bidder><time>{:02}:{:02}</time><increase>{}.{:02}</increase></bidder>",
                (a + b) % 24,
                (a * 7 + b * 11) % 60,
                1 + (a + b) % 40,
                (a * b) % 100,
            );
        }
        let _ = write!(out, "<current>{}</current></open_auction>\n", 5 + (a * 17) % 1200);
        a += 1;
    }
    out.push_str("</open_auctions>\n</site>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_documents_stay_small() {
        for (uri, doc) in small_docs() {
            assert!(doc.rows.len() <= 200, "{uri} has {} nodes", doc.rows.len());
            doc.check_invariants().unwrap();
        }
    }

    #[test]
    fn generated_site_shreds() {
        let xml = generate_site_xml(20_000);
        let doc = shred(&xml, "xmark.xml", 0).unwrap();
        assert!(doc.rows.len() > 500);
        doc.check_invariants().unwrap();
    }

    #[test]
    fn vocabularies_are_nonempty() {
        let doc = site_doc();
        assert!(tag_vocabulary(&doc).contains(&"open_auction".to_string()));
        let (s, d) = literal_vocabulary(&doc);
        assert!(!s.is_empty() && !d.is_empty());
    }
}
