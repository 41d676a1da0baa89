//! Corpus-wide kernel checks: canonical formatting and expansion coverage.

use ppkern::engine::Registry;
use ppkern::kernelc::{expand_program, format_kernel, parse_kernel};

const SECTIONS: [&str; 8] = ["code", "badcode", "backcode", "badbackcode", "equivcpoffs", "redodimscode", "makecomp", "redodims"];

#[test]
fn format_is_a_fixed_point() {
    let reg = Registry::with_corpus();
    for name in reg.names() {
        let def = reg.get(name).unwrap();
        let kernels = [
            &def.code,
            &def.badcode,
            &def.flow.backcode,
            &def.flow.badbackcode,
            &def.flow.equivcpoffs,
            &def.redodimscode,
            &def.flow.makecomp,
            &def.flow.redodims,
        ];
        for k in kernels.into_iter().flatten() {
            let once = format_kernel(k);
            let twice = format_kernel(&parse_kernel(&once).unwrap_or_else(|e| panic!("{name}: {e}\n{once}")));
            assert_eq!(once, twice, "{name}");
        }
    }
}

#[test]
fn every_kernel_expands_for_every_generic() {
    let reg = Registry::with_corpus();
    let mut count = 0;
    for name in reg.names() {
        let def = reg.get(name).unwrap();
        for &t in def.generictypes.types() {
            for section in SECTIONS {
                for bounds in [false, true] {
                    if let Some(prog) = def.program(section, t).unwrap() {
                        let a = expand_program(&prog, name, bounds);
                        assert_eq!(a, expand_program(&prog, name, bounds));
                        assert!(a.contains(&format!("generic={t}")), "{name} {section} {t}");
                        count += 1;
                    }
                }
            }
        }
    }
    assert!(count > 100, "{count}");
}

#[test]
fn bad_variant_mentions_bad_values_only_there() {
    let reg = Registry::with_corpus();
    let def = reg.get("recip").unwrap();
    let t = def.generictypes.types()[0];
    let good = expand_program(&def.program("code", t).unwrap().unwrap(), "recip", false);
    let bad = expand_program(&def.program("badcode", t).unwrap().unwrap(), "recip", false);
    assert!(bad.contains("PDL_ISBAD"));
    assert!(!good.contains("PDL_ISBAD"));
}
