//! Bracket notation and structured output for abstract values.

use serde_json::{json, Map, Value};

use crate::engine::{AbstractValue, AnalysisResult};
use crate::netmodel::literal::{format_value, format_value_set};
use crate::netmodel::Network;
use crate::pktset::{Formula, Header, HeaderLayout, PacketSpace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedField {
    pub field: String,
    pub set: String,
    /// The field is independent of the others, so the printed product is
    /// exact in this field.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedPacket {
    pub curr: Vec<RenderedField>,
    pub orig: Option<Vec<RenderedField>>,
    /// Rewritten-field mask as a bit string in field order.
    pub nated: Option<String>,
}

pub fn render_formula(sp: &mut PacketSpace, f: Formula) -> Vec<RenderedField> {
    let layout = sp.layout().clone();
    let exact = sp.independent_fields(f);
    layout
        .field_ids()
        .map(|id| {
            let values = sp.field_values(f, id);
            RenderedField {
                field: layout.name(id).to_string(),
                set: format_value_set(&values, layout.width(id)),
                exact: exact[id.0],
            }
        })
        .collect()
}

fn key_string(p: &RenderedPacket) -> String {
    let orig = p.orig.as_deref().map(bracket).unwrap_or_default();
    format!("{orig}|{}", p.nated.as_deref().unwrap_or(""))
}

/// One rendered packet per abstract packet, ordered by (orig, mask) text;
/// bottom renders as no packets.
pub fn render_value(sp: &mut PacketSpace, v: &AbstractValue) -> Vec<RenderedPacket> {
    if v.is_bottom(sp) {
        return Vec::new();
    }
    let n = sp.layout().n_fields();
    let mut out: Vec<RenderedPacket> = match v {
        AbstractValue::Relational(f) => vec![RenderedPacket {
            curr: render_formula(sp, *f),
            orig: None,
            nated: None,
        }],
        AbstractValue::Attribute(_) => {
            let f = v.curr(sp);
            vec![RenderedPacket {
                curr: render_formula(sp, f),
                orig: None,
                nated: None,
            }]
        }
        AbstractValue::Tracked(_) => v
            .tracked_packets()
            .into_iter()
            .map(|p| RenderedPacket {
                curr: render_formula(sp, p.curr),
                orig: Some(render_formula(sp, p.orig)),
                nated: Some(p.nated.bits(n)),
            })
            .collect(),
    };
    out.sort_by_cached_key(key_string);
    out
}

/// `[s-set : d-set]`, with `(approx)` after inexact fields.
pub fn bracket(fields: &[RenderedField]) -> String {
    let parts: Vec<String> = fields
        .iter()
        .map(|f| {
            if f.exact {
                f.set.clone()
            } else {
                format!("{} (approx)", f.set)
            }
        })
        .collect();
    format!("[{}]", parts.join(" : "))
}

pub fn packet_text(p: &RenderedPacket) -> String {
    match &p.orig {
        Some(o) => format!("<{}, {}>", bracket(&p.curr), bracket(o)),
        None => format!("<{}>", bracket(&p.curr)),
    }
}

pub const UNREACHABLE: &str = "(unreachable)";

fn fields_json(fields: &[RenderedField]) -> Value {
    let mut m = Map::new();
    for f in fields {
        m.insert(f.field.clone(), json!({"set": f.set, "exact": f.exact}));
    }
    Value::Object(m)
}

pub fn packet_json(p: &RenderedPacket) -> Value {
    let mut m = Map::new();
    m.insert("curr".into(), fields_json(&p.curr));
    if let Some(o) = &p.orig {
        m.insert("orig".into(), fields_json(o));
    }
    if let Some(n) = &p.nated {
        m.insert("nated".into(), Value::String(n.clone()));
    }
    Value::Object(m)
}

pub fn formula_json(sp: &mut PacketSpace, f: Formula) -> Value {
    if sp.is_empty(f) {
        return Value::Null;
    }
    let r = render_formula(sp, f);
    fields_json(&r)
}

pub fn formula_text(sp: &mut PacketSpace, f: Formula) -> String {
    if sp.is_empty(f) {
        return "false".into();
    }
    let r = render_formula(sp, f);
    bracket(&r)
}

pub fn header_text(layout: &HeaderLayout, h: Header) -> String {
    let parts: Vec<String> = layout
        .field_ids()
        .map(|f| format_value(layout.field_value(h, f), layout.width(f)))
        .collect();
    format!("[{}]", parts.join(" : "))
}

/// The analysis as text: one line per abstract packet, then drops and
/// diagnostics. Deterministic for a given input.
pub fn analysis_text(sp: &mut PacketSpace, net: &Network, r: &AnalysisResult) -> String {
    let mut out = String::new();
    if let Some(name) = &net.name {
        out.push_str(&format!("network: {name}\n"));
    }
    out.push_str(&format!(
        "origin: {}\nvariant: {}\n",
        net.node_name(r.origin),
        r.variant
    ));
    for n in net.nodes() {
        let name = net.node_name(n);
        let packets = render_value(sp, r.fact(n));
        if packets.is_empty() {
            out.push_str(&format!("{name} = {UNREACHABLE}\n"));
        }
        for p in packets {
            out.push_str(&format!("{name} = {}\n", packet_text(&p)));
        }
    }
    for (rule, f) in r.ledger.iter() {
        let t = formula_text(sp, f);
        out.push_str(&format!("dropped by rule {rule}: {t}\n"));
    }
    for (n, f) in &r.diagnostics.no_route {
        let t = formula_text(sp, *f);
        out.push_str(&format!("no route at {}: {t}\n", net.node_name(*n)));
    }
    for (n, f) in &r.diagnostics.misdelivered {
        let t = formula_text(sp, *f);
        out.push_str(&format!("misdelivered at {}: {t}\n", net.node_name(*n)));
    }
    out.push_str(&format!(
        "iterations: {}, joins: {}\n",
        r.stats.iterations, r.stats.joins
    ));
    out
}

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub fn analysis_json(sp: &mut PacketSpace, net: &Network, r: &AnalysisResult) -> Value {
    let mut facts = Map::new();
    for n in net.nodes() {
        let packets: Vec<Value> = render_value(sp, r.fact(n))
            .iter()
            .map(packet_json)
            .collect();
        facts.insert(net.node_name(n).to_string(), Value::Array(packets));
    }
    let mut ledger = Map::new();
    for (rule, f) in r.ledger.iter() {
        ledger.insert(rule.to_string(), formula_json(sp, f));
    }
    let mut no_route = Map::new();
    for (n, f) in &r.diagnostics.no_route {
        no_route.insert(net.node_name(*n).to_string(), formula_json(sp, *f));
    }
    let mut misdelivered = Map::new();
    for (n, f) in &r.diagnostics.misdelivered {
        misdelivered.insert(net.node_name(*n).to_string(), formula_json(sp, *f));
    }
    json!({
        "schema": OUTPUT_SCHEMA_VERSION,
        "network": net.name,
        "origin": net.node_name(r.origin),
        "variant": r.variant.to_string(),
        "facts": facts,
        "ledger": ledger,
        "diagnostics": {"no_route": no_route, "misdelivered": misdelivered},
        "stats": {
            "iterations": r.stats.iterations,
            "joins": r.stats.joins,
            "wall_ms": r.stats.wall.as_secs_f64() * 1000.0,
        },
    })
}
