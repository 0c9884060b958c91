use std::path::Path;

use dynograph_core::parser::parse_model_full;
use dynograph_core::{derive_graph, validate, InfluenceGraph, SystemSpec};

use crate::error::{CliError, CliResult};

/// Parses and validates a model file. Diagnostics and violations become the
/// error message, one per line.
pub fn load_model(path: &Path, bytes: &[u8]) -> CliResult<SystemSpec> {
    let file = path.display().to_string();
    let text = std::str::from_utf8(bytes).map_err(|_| CliError::validation(format!("{file}: not UTF-8")))?;
    let outcome = parse_model_full(text);
    let Some(spec) = outcome.spec else {
        let lines: Vec<String> = outcome.diagnostics.iter().map(|d| d.render(&file)).collect();
        return Err(CliError::validation(lines.join("\n")));
    };
    for d in &outcome.diagnostics {
        eprintln!("{}", d.render(&file));
    }
    let report = validate(&spec);
    if !report.is_empty() {
        let lines: Vec<String> = report.violations.iter().map(|v| format!("{file}: {v}")).collect();
        return Err(CliError::validation(lines.join("\n")));
    }
    Ok(spec)
}

/// A graph from either a model file or a graph JSON file (`.json`).
pub fn load_graph(path: &Path, bytes: &[u8]) -> CliResult<(String, InfluenceGraph)> {
    if path.extension().is_some_and(|e| e == "json") {
        let text =
            std::str::from_utf8(bytes).map_err(|_| CliError::validation(format!("{}: not UTF-8", path.display())))?;
        let g =
            InfluenceGraph::from_json(text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "graph".into());
        return Ok((name, g));
    }
    let spec = load_model(path, bytes)?;
    let g = derive_graph(&spec).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok((spec.name, g))
}

/// Splits a comma-separated list, dropping empty items.
pub fn name_list(raw: &str) -> Vec<String> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}
