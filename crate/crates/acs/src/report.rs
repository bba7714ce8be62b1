//! Text and JSON renderings of cost reports.

use acs_core::profile::{Comparison, CostReport};
use serde_json::{json, Value};

fn dims(s: &[usize]) -> String {
    s.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("×")
}

/// Aligned table, one row per layer plus a totals row.
pub fn cost_table(r: &CostReport) -> String {
    let header = [
        "layer",
        "kind",
        "output",
        "macs",
        "params",
        "bias",
        "activations",
    ];
    let mut rows: Vec<[String; 7]> = r
        .layers
        .iter()
        .map(|l| {
            [
                l.name.clone(),
                l.kind.to_string(),
                dims(&l.output_shape),
                l.macs.to_string(),
                l.params.to_string(),
                l.bias_params.to_string(),
                l.activation_elems.to_string(),
            ]
        })
        .collect();
    let t = &r.totals;
    rows.push([
        "total".into(),
        String::new(),
        String::new(),
        t.macs.to_string(),
        t.params.to_string(),
        t.bias_params.to_string(),
        format!("{} (peak {})", t.activation_elems, t.peak_activation_elems),
    ]);
    table(&header, &rows)
}

fn table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut width = header.map(str::len);
    for row in rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(width).enumerate() {
            let pad = w - c.chars().count();
            // Names left-aligned, numbers right-aligned.
            if i < 3 {
                s += c;
                s += &" ".repeat(pad);
            } else {
                s += &" ".repeat(pad);
                s += c;
            }
            if i + 1 < N {
                s += "  ";
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(
        width
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn cost_json(r: &CostReport) -> Value {
    let t = &r.totals;
    json!({
        "layers": r.layers.iter().map(|l| json!({
            "name": l.name,
            "kind": l.kind,
            "output_shape": l.output_shape,
            "macs": l.macs,
            "params": l.params,
            "bias_params": l.bias_params,
            "activation_elems": l.activation_elems,
        })).collect::<Vec<_>>(),
        "totals": {
            "macs": t.macs,
            "params": t.params,
            "bias_params": t.bias_params,
            "activation_elems": t.activation_elems,
            "peak_activation_elems": t.peak_activation_elems,
        },
    })
}

/// Ratios `a / b` for totals and per shared layer.
pub fn comparison_table(c: &Comparison) -> String {
    let mut rows = vec![
        ["total macs".to_string(), format!("{:.4}", c.macs)],
        ["total params".to_string(), format!("{:.4}", c.params)],
    ];
    // Layers without parameters (or MACs) have no ratio.
    for (name, macs, params) in &c.layers {
        if macs.is_finite() {
            rows.push([format!("{name} macs"), format!("{macs:.4}")]);
        }
        if params.is_finite() {
            rows.push([format!("{name} params"), format!("{params:.4}")]);
        }
    }
    let mut out = String::new();
    let w = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
    for [k, v] in rows {
        out += &format!("{k:<w$}  {v}\n");
    }
    out
}

pub fn comparison_json(c: &Comparison) -> Value {
    json!({
        "macs": c.macs,
        "params": c.params,
        "layers": c.layers.iter().map(|(n, m, p)| json!({"name": n, "macs": m, "params": p})).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use acs_core::graph::{toy_unet, UNetSpec};
    use acs_core::profile::model_cost;

    #[test]
    fn table_has_a_row_per_layer_and_totals() {
        let g = toy_unet(UNetSpec::default()).unwrap();
        let r = model_cost(&g, &[1, 1, 48, 48]).unwrap();
        let t = cost_table(&r);
        assert_eq!(t.lines().count(), r.layers.len() + 3);
        let last = t.lines().last().unwrap();
        assert!(last.starts_with("total") && last.contains(&r.totals.params.to_string()));
        let j = cost_json(&r);
        assert_eq!(j["totals"]["macs"], r.totals.macs);
        assert_eq!(j["layers"].as_array().unwrap().len(), r.layers.len());
    }
}
