use super::builder::{CompiledProgram, Contract, ContractSlots, ProgramSpec};
use crate::error::{Error, Result};

/// Runs several programs side by side in one network.
///
/// The programs share the read-only input columns and must write disjoint
/// columns. The result has as many blocks as the deepest constituent and
/// concatenates the heads of each block in program order.
pub fn parallel_compose(programs: &[CompiledProgram], ell_total: usize) -> Result<CompiledProgram> {
    let Some(first) = programs.first() else {
        return Err(Error::Contract("nothing to compose".into()));
    };
    if programs.len() == 1 {
        return CompiledProgram::from_spec(first.spec().clone(), ell_total, first.contract().clone());
    }
    let mut seen = std::collections::BTreeMap::new();
    for (p, prog) in programs.iter().enumerate() {
        for t in prog.written_columns() {
            if let Some(q) = seen.insert(t, p) {
                return Err(Error::Allocation(format!(
                    "programs {} and {} both write column {t}",
                    q + 1,
                    p + 1
                )));
            }
        }
    }
    let specs: Vec<&ProgramSpec> = programs.iter().map(CompiledProgram::spec).collect();
    let spec = ProgramSpec::merge(&specs)?;
    let contract = Contract {
        op: format!(
            "parallel({})",
            programs.iter().map(|p| p.contract().op.as_str()).collect::<Vec<_>>().join(",")
        ),
        slots: ContractSlots {
            inputs: first.inputs().to_vec(),
            outputs: programs.iter().flat_map(|p| p.outputs().iter().copied()).collect(),
        },
        bound_m: spec.bound,
        claimed_tolerance: programs.iter().map(|p| p.contract().claimed_tolerance).fold(0.0, f64::max),
    };
    CompiledProgram::from_spec(spec, ell_total, contract)
}
