//! Machine-readable registry of pseudo-group examples: determining
//! equations, regularity conditions, closed-form low-order frames,
//! cross-sections, and published golden values.
//!
//! Entries are constructed in code and can be exported to / reloaded from
//! JSON files (one per entry).  `IJETS_CATALOG_DIR` overrides the source of
//! truth at load time.

mod entries;
mod goldens;
mod transforms;

pub use goldens::{
    character_property_suite, commutativity_property_suite, emit_invariants, emit_slots_f64,
    ex10_chain_revalidation, run_all_goldens, running_chain_revalidation, running_normal_form_system,
    running_growth_diagnostic, running_target_jets, running_target_series, GoldenCheck,
};
pub use transforms::transform_section;

use std::path::Path;

use crate::expr::{Coord, Expr};
use crate::jetcalc::JetPoint;
use crate::normalform::CrossSection;
use crate::system::DifferentialSystem;

/// Errors from catalog access.
#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown catalog id {0:?}")]
    UnknownId(String),
    #[error("malformed catalog file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One catalog entry.  Optional parts reflect what the source provides: a
/// determining system at the diffeomorphism level, a transcribed reduced
/// system, or both.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub description: &'static str,
    /// Determining system over diffeomorphism jets, when transcribed.
    pub determining: Option<DifferentialSystem>,
    /// Reduced determining system, when transcribed directly.
    pub reduced: Option<DifferentialSystem>,
    /// Regular evaluation point carrying the catalog's open conditions.
    pub regular_point: JetPoint,
    pub cross_section: Option<CrossSection>,
    /// Closed-form frame values for orders `<= n_f`, in solve order.
    pub closed_forms: Vec<(Coord, Expr)>,
    /// Order of freeness of the prolonged action, when known.
    pub n_f: Option<usize>,
    /// Order of involutivity of the determining equations, when known.
    pub n_star: Option<usize>,
    /// One citation string per golden block attached to this entry.
    pub citations: Vec<&'static str>,
}

/// All known entry ids.
pub fn ids() -> Vec<&'static str> {
    vec![
        "running",
        "ex4",
        "ex5",
        "ex99",
        "xfxu",
        "redfree-pg1",
        "redfree-pg2",
        "redfree-pg3",
        "n2",
        "ex10",
        "ex12-original",
        "ex12-regularized",
        "ex13",
        "ex14",
        "ex15",
        "cm-complex",
    ]
}

/// Loads an entry, preferring `IJETS_CATALOG_DIR` JSON files when the
/// environment variable is set.
pub fn load(id: &str) -> Result<CatalogEntry, CatalogError> {
    if let Ok(dir) = std::env::var("IJETS_CATALOG_DIR") {
        let path = Path::new(&dir).join(format!("{id}.json"));
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CatalogError::Malformed(e.to_string()))?;
            return entry_from_json(id, &value);
        }
    }
    builtin(id)
}

/// Loads the built-in (in-code) entry.
pub fn builtin(id: &str) -> Result<CatalogEntry, CatalogError> {
    entries::build(id).ok_or_else(|| CatalogError::UnknownId(id.to_string()))
}

/// Serializes an entry into its JSON file format.
pub fn entry_to_json(entry: &CatalogEntry) -> serde_json::Value {
    serde_json::json!({
        "id": entry.id,
        "description": entry.description,
        "determining": entry.determining.as_ref().map(|s| s.to_json()),
        "reduced": entry.reduced.as_ref().map(|s| s.to_json()),
        "regular_point": {
            "base": entry.regular_point.base.iter().map(crate::scalar::rat_to_string).collect::<Vec<_>>(),
            "seed": entry.regular_point.seed,
            "p": entry.regular_point.p,
            "q": entry.regular_point.q,
            "overrides": entry.regular_point.overrides.iter().map(|(c, v)| serde_json::json!({
                "dep": c.dep, "index": c.index.entries(), "value": crate::scalar::rat_to_string(v),
            })).collect::<Vec<_>>(),
        },
        "cross_section": entry.cross_section.as_ref().map(|cs| cs.to_json()),
        "closed_forms": entry.closed_forms.iter().map(|(c, e)| serde_json::json!({
            "coord": c, "expr": e.to_json(),
        })).collect::<Vec<_>>(),
        "n_f": entry.n_f,
        "n_star": entry.n_star,
        "citations": entry.citations,
    })
}

fn entry_from_json(id: &str, v: &serde_json::Value) -> Result<CatalogEntry, CatalogError> {
    // The static strings (id, description, citations) come from the built-in
    // table; the mathematical payload comes from the file.
    let mut entry = builtin(id)?;
    let bad = |m: &str| CatalogError::Malformed(m.to_string());
    if let Some(d) = v.get("determining").filter(|d| !d.is_null()) {
        entry.determining =
            Some(DifferentialSystem::from_json(d).ok_or_else(|| bad("determining"))?);
    } else {
        entry.determining = None;
    }
    if let Some(d) = v.get("reduced").filter(|d| !d.is_null()) {
        entry.reduced = Some(DifferentialSystem::from_json(d).ok_or_else(|| bad("reduced"))?);
    } else {
        entry.reduced = None;
    }
    if let Some(rp) = v.get("regular_point") {
        let p = rp.get("p").and_then(|x| x.as_u64()).ok_or_else(|| bad("p"))? as usize;
        let q = rp.get("q").and_then(|x| x.as_u64()).ok_or_else(|| bad("q"))? as usize;
        let seed = rp
            .get("seed")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| bad("seed"))?;
        let base = rp
            .get("base")
            .and_then(|b| b.as_array())
            .ok_or_else(|| bad("base"))?
            .iter()
            .map(|s| s.as_str().and_then(crate::scalar::rat_from_str))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("base"))?;
        let mut point = JetPoint::generic(p, q, seed).with_base(base);
        for item in rp
            .get("overrides")
            .and_then(|o| o.as_array())
            .ok_or_else(|| bad("overrides"))?
        {
            let dep = item.get("dep").and_then(|x| x.as_u64()).ok_or_else(|| bad("dep"))? as u8;
            let idx: Vec<u8> = item
                .get("index")
                .and_then(|x| x.as_array())
                .ok_or_else(|| bad("index"))?
                .iter()
                .map(|e| e.as_u64().map(|x| x as u8))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("index"))?;
            let value = item
                .get("value")
                .and_then(|x| x.as_str())
                .and_then(crate::scalar::rat_from_str)
                .ok_or_else(|| bad("value"))?;
            point.set(dep, crate::multiindex::MultiIndex::new(idx), value);
        }
        entry.regular_point = point;
    }
    if let Some(cs) = v.get("cross_section").filter(|c| !c.is_null()) {
        entry.cross_section = Some(CrossSection::from_json(cs).ok_or_else(|| bad("cross_section"))?);
    }
    if let Some(cf) = v.get("closed_forms").and_then(|c| c.as_array()) {
        let mut forms = Vec::new();
        for item in cf {
            let coord: Coord = serde_json::from_value(
                item.get("coord").ok_or_else(|| bad("coord"))?.clone(),
            )
            .map_err(|e| bad(&e.to_string()))?;
            let expr = Expr::from_json(item.get("expr").ok_or_else(|| bad("expr"))?)
                .ok_or_else(|| bad("expr"))?;
            forms.push((coord, expr));
        }
        entry.closed_forms = forms;
    }
    entry.n_f = v.get("n_f").and_then(|x| x.as_u64()).map(|x| x as usize);
    entry.n_star = v.get("n_star").and_then(|x| x.as_u64()).map(|x| x as usize);
    Ok(entry)
}

/// Writes every entry as `<dir>/<id>.json`.
pub fn dump_to(dir: &Path) -> Result<(), CatalogError> {
    std::fs::create_dir_all(dir)?;
    for id in ids() {
        let entry = builtin(id)?;
        let json = entry_to_json(&entry);
        let text = serde_json::to_string_pretty(&json).expect("serializable");
        std::fs::write(dir.join(format!("{id}.json")), text + "\n")?;
    }
    Ok(())
}

/// The reduced system of an entry: transcribed if present, otherwise
/// computed through the reduction map.
pub fn reduced_system(
    entry: &CatalogEntry,
    up_to: usize,
) -> Result<crate::reduction::ReducedSystem, crate::system::SystemError> {
    if let Some(reduced) = &entry.reduced {
        let sys = reduced.prolonged_to(up_to.max(reduced.order))?;
        return Ok(crate::reduction::ReducedSystem {
            system: sys,
            eliminated: std::collections::HashMap::new(),
        });
    }
    let det = entry
        .determining
        .clone()
        .expect("entry has a determining or a reduced system");
    let g = crate::reduction::PseudoGroupSpec::new(det);
    crate::reduction::reduce(&g, &entry.regular_point, up_to)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_builds() {
        for id in ids() {
            let entry = builtin(id).unwrap();
            assert!(
                entry.determining.is_some() || entry.reduced.is_some(),
                "{id} has no system"
            );
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(matches!(load("nope"), Err(CatalogError::UnknownId(_))));
    }

    #[test]
    fn json_dump_round_trips() {
        let dir = std::env::temp_dir().join(format!("ijets-catalog-{}", std::process::id()));
        dump_to(&dir).unwrap();
        for id in ids() {
            let text = std::fs::read_to_string(dir.join(format!("{id}.json"))).unwrap();
            let value: serde_json::Value = serde_json::from_str(&text).unwrap();
            let from_file = entry_from_json(id, &value).unwrap();
            let built = builtin(id).unwrap();
            assert_eq!(
                from_file.determining.map(|s| s.to_json()),
                built.determining.map(|s| s.to_json()),
                "{id}"
            );
            assert_eq!(
                from_file.reduced.map(|s| s.to_json()),
                built.reduced.map(|s| s.to_json()),
                "{id}"
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
