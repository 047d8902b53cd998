#![allow(dead_code)]

use std::sync::OnceLock;

use bochner_core::classify::{build_pair, scan_family, BochnerPair, ClassPoint, Family, ScanConfig};

/// Two certified points per family from a seeded scan, computed once per test binary.
pub fn scanned(fam: Family) -> &'static [ClassPoint] {
    static CACHE: OnceLock<Vec<Vec<ClassPoint>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        Family::ALL
            .iter()
            .map(|&f| {
                let report = scan_family(f, &ScanConfig { count: 2, ..ScanConfig::default() });
                assert_eq!(report.records.len(), 2, "scan of family {} came up short", f.name());
                report.records.iter().map(|r| r.point).collect()
            })
            .collect()
    });
    &all[Family::ALL.iter().position(|f| *f == fam).unwrap()]
}

pub fn pair(p: &ClassPoint) -> BochnerPair {
    build_pair(p).expect("scanned point builds")
}
