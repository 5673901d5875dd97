use thiserror::Error;

use super::TestSpec;
use crate::dataset::DesignPoint;
use crate::prompt::fill_template;
use crate::rng::C_PRELUDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Reference,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("entry symbol `{symbol}` not found in the {side:?} source")]
    MissingEntry { symbol: String, side: Side },
}

/// Two single-file C programs sharing one harness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarnessUnits {
    pub reference: String,
    pub candidate: String,
}

/// True if `symbol` appears in `source` as a whole identifier.
pub(crate) fn mentions_symbol(source: &str, symbol: &str) -> bool {
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    source.match_indices(symbol).any(|(i, _)| {
        let before = source[..i].chars().next_back();
        let after = source[i + symbol.len()..].chars().next();
        !before.is_some_and(is_ident) && !after.is_some_and(is_ident)
    })
}

fn unit(kernel: &str, spec: &TestSpec) -> String {
    let seed = spec.input_seed.to_string();
    let harness = fill_template(
        &spec.harness_source,
        &[("input_seed", &seed), ("entry_symbol", &spec.entry_symbol)],
    );
    let mut out = String::with_capacity(C_PRELUDE.len() + kernel.len() + harness.len() + 128);
    out.push_str(C_PRELUDE);
    out.push_str(&format!("#define HLS_INPUT_SEED {seed}ULL\n"));
    // a kernel that brings its own test driver must not clash with ours
    out.push_str("#define main hls_kernel_main\n#line 1 \"kernel.c\"\n");
    out.push_str(kernel);
    out.push_str("\n#undef main\n#line 1 \"harness.c\"\n");
    out.push_str(&harness);
    out.push('\n');
    out
}

/// Assembles `prelude + kernel + harness` for both the reference and the
/// candidate. The harness template may use `{input_seed}` and
/// `{entry_symbol}`; `HLS_INPUT_SEED` is also defined for it.
pub fn build_harness(point: &DesignPoint, spec: &TestSpec, candidate_source: &str) -> Result<HarnessUnits, HarnessError> {
    if !mentions_symbol(&point.reference_source, &spec.entry_symbol) {
        return Err(HarnessError::MissingEntry { symbol: spec.entry_symbol.clone(), side: Side::Reference });
    }
    if !mentions_symbol(candidate_source, &spec.entry_symbol) {
        return Err(HarnessError::MissingEntry { symbol: spec.entry_symbol.clone(), side: Side::Candidate });
    }
    Ok(HarnessUnits {
        reference: unit(&point.reference_source, spec),
        candidate: unit(candidate_source, spec),
    })
}
