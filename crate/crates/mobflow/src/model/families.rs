//! Dominant language family per region, matched by code prefix.
//!
//! The bundled table maps region-code prefixes to language families. A region
//! code is matched against the longest applicable prefix, so sub-national
//! entries (for example the French-speaking parts of multilingual countries)
//! override their country's default. When no prefix matches the region code,
//! the country code is tried on its own.

/// Prefix table, longest match wins.
#[derive(Debug, Clone)]
pub struct LanguageFamilies {
    entries: Vec<(String, String)>,
}

const BUNDLED: &str = include_str!("../../data/language_families.csv");

impl LanguageFamilies {
    /// The table shipped with the crate, covering the European region codes
    /// used by the flow models.
    pub fn bundled() -> Self {
        let entries = BUNDLED
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (prefix, family) = l.split_once(',').expect("bundled table is well-formed");
                (prefix.trim().to_uppercase(), family.trim().to_string())
            })
            .collect();
        LanguageFamilies { entries }
    }

    /// Family for a region, falling back to its country code. Returns `None`
    /// when neither matches.
    pub fn family(&self, region: &str, country: &str) -> Option<&str> {
        let region = region.trim().to_uppercase();
        let best = self
            .entries
            .iter()
            .filter(|(p, _)| region.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len());
        if let Some((_, family)) = best {
            return Some(family);
        }
        let country = country.trim().to_uppercase();
        self.entries
            .iter()
            .find(|(p, _)| *p == country)
            .map(|(_, f)| f.as_str())
    }

    /// Whether two regions share a dominant language family. Unknown regions
    /// never match anything.
    pub fn same_family(&self, region_a: &str, country_a: &str, region_b: &str, country_b: &str) -> bool {
        match (self.family(region_a, country_a), self.family(region_b, country_b)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}
