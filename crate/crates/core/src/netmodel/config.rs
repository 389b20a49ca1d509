//! The JSON configuration format. See `docs/network-schema-v1.md`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::literal::{format_value_set, parse_value_set};
use super::{
    Action, FieldRoles, FilterRule, Firewall, Guard, IfaceId, Interface, NatRule, NetError,
    Network, NodeId, RuleId, Zone,
};
use crate::pktset::{FieldId, FieldSpec, HeaderLayout, ValueSet};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    #[serde(default = "schema_version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub layout: LayoutDoc,
    pub zones: Vec<ZoneDoc>,
    pub firewalls: Vec<FirewallDoc>,
    pub links: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutDoc {
    Named(String),
    Custom(CustomLayoutDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomLayoutDoc {
    pub fields: Vec<FieldSpec>,
    pub src_addr: String,
    pub dst_addr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_port: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_port: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneDoc {
    pub name: String,
    pub interface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ports: Option<String>,
}

/// Field name to value-set literal.
pub type GuardDoc = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirewallDoc {
    pub name: String,
    pub interfaces: Vec<String>,
    #[serde(default)]
    pub dnat: Vec<NatDoc>,
    pub filter: Vec<FilterDoc>,
    #[serde(default)]
    pub snat: Vec<NatDoc>,
    #[serde(default)]
    pub routing: BTreeMap<String, GuardDoc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionDoc {
    #[serde(rename = "DROP", alias = "drop")]
    Drop,
    #[serde(rename = "ACCEPT", alias = "accept")]
    Accept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<i64>,
    #[serde(default)]
    pub guard: GuardDoc,
    pub action: ActionDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NatDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<i64>,
    #[serde(default)]
    pub guard: GuardDoc,
    pub field: String,
    pub to: String,
}

/// Parses and validates a configuration document.
pub fn load_network(text: &str) -> Result<Network, NetError> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        NetError::Parse {
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })?;
    Network::from_doc(&doc)
}

fn invalid(msg: impl Into<String>) -> NetError {
    NetError::Invalid(msg.into())
}

fn resolve_layout(doc: &LayoutDoc) -> Result<(HeaderLayout, FieldRoles), NetError> {
    let (layout, roles) = match doc {
        LayoutDoc::Named(n) if n == "addr2" => {
            (HeaderLayout::addr2(), [Some("s"), Some("d"), None, None])
        }
        LayoutDoc::Named(n) if n == "ipv4lite" => (
            HeaderLayout::ipv4lite(),
            [Some("s"), Some("d"), Some("sp"), Some("dp")],
        ),
        LayoutDoc::Named(n) => {
            return Err(invalid(format!(
                "unknown layout `{n}`; expected \"addr2\", \"ipv4lite\" or a field list"
            )))
        }
        LayoutDoc::Custom(c) => {
            let layout = HeaderLayout::new(c.fields.iter().map(|f| (f.name.clone(), f.width)))
                .map_err(|e| invalid(e.to_string()))?;
            (
                layout,
                [
                    Some(c.src_addr.as_str()),
                    Some(c.dst_addr.as_str()),
                    c.src_port.as_deref(),
                    c.dst_port.as_deref(),
                ],
            )
        }
    };
    let lookup = |n: Option<&str>| -> Result<Option<FieldId>, NetError> {
        n.map(|n| {
            layout
                .field_id(n)
                .map_err(|_| invalid(format!("layout role names unknown field `{n}`")))
        })
        .transpose()
    };
    let roles = FieldRoles {
        src_addr: lookup(roles[0])?.expect("src role"),
        dst_addr: lookup(roles[1])?.expect("dst role"),
        src_port: lookup(roles[2])?,
        dst_port: lookup(roles[3])?,
    };
    let ids = [
        Some(roles.src_addr),
        Some(roles.dst_addr),
        roles.src_port,
        roles.dst_port,
    ];
    let distinct: BTreeSet<FieldId> = ids.iter().flatten().copied().collect();
    if distinct.len() != ids.iter().flatten().count() {
        return Err(invalid("layout roles must name distinct fields"));
    }
    if layout.width(roles.src_addr) != layout.width(roles.dst_addr) {
        return Err(invalid(
            "source and destination address fields must have equal widths",
        ));
    }
    if let (Some(a), Some(b)) = (roles.src_port, roles.dst_port) {
        if layout.width(a) != layout.width(b) {
            return Err(invalid(
                "source and destination port fields must have equal widths",
            ));
        }
    }
    Ok((layout, roles))
}

fn parse_set(
    layout: &HeaderLayout,
    f: FieldId,
    text: &str,
    ctx: &str,
) -> Result<ValueSet, NetError> {
    let w = layout.width(f);
    parse_value_set(text, w)
        .map(|v| v.normalized(w))
        .map_err(|e| invalid(format!("{ctx}: field `{}`: {e}", layout.name(f))))
}

fn parse_guard(layout: &HeaderLayout, g: &GuardDoc, ctx: &str) -> Result<Guard, NetError> {
    let mut atoms = Vec::with_capacity(g.len());
    for (name, text) in g {
        let f = layout
            .field_id(name)
            .map_err(|_| invalid(format!("{ctx}: guard names unknown field `{name}`")))?;
        atoms.push((f, parse_set(layout, f, text, ctx)?));
    }
    Ok(Guard::from_atoms(atoms))
}

fn ranges_overlap(a: &[(u64, u64)], b: &[(u64, u64)]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].1 < b[j].0 {
            i += 1;
        } else if b[j].1 < a[i].0 {
            j += 1;
        } else {
            return true;
        }
    }
    false
}

/// Hands out rule ids: explicit ids first, then the smallest unused positive
/// integers in declaration order.
struct RuleIds {
    used: BTreeSet<i64>,
    next: i64,
}

impl RuleIds {
    fn new(doc: &NetworkDoc) -> Result<Self, NetError> {
        let mut used = BTreeSet::new();
        let explicit = doc.firewalls.iter().flat_map(|f| {
            f.dnat
                .iter()
                .map(|r| r.id)
                .chain(f.filter.iter().map(|r| r.id))
                .chain(f.snat.iter().map(|r| r.id))
        });
        for id in explicit.flatten() {
            if id <= 0 {
                return Err(invalid(format!("rule id {id} must be positive")));
            }
            if !used.insert(id) {
                return Err(invalid(format!("rule id {id} is used more than once")));
            }
        }
        Ok(RuleIds { used, next: 1 })
    }

    fn take(&mut self, explicit: Option<i64>) -> RuleId {
        if let Some(id) = explicit {
            return RuleId(id);
        }
        while self.used.contains(&self.next) {
            self.next += 1;
        }
        self.used.insert(self.next);
        RuleId(self.next)
    }
}

fn add_iface(
    interfaces: &mut Vec<Interface>,
    index: &mut BTreeMap<String, IfaceId>,
    name: &str,
    node: NodeId,
) -> Result<IfaceId, NetError> {
    let id = IfaceId(interfaces.len());
    if index.insert(name.to_string(), id).is_some() {
        return Err(invalid(format!(
            "interface `{name}` belongs to more than one node"
        )));
    }
    interfaces.push(Interface {
        name: name.to_string(),
        node,
    });
    Ok(id)
}

impl Network {
    pub fn from_doc(doc: &NetworkDoc) -> Result<Network, NetError> {
        if doc.version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema version {}; expected {SCHEMA_VERSION}",
                doc.version
            )));
        }
        let (layout, roles) = resolve_layout(&doc.layout)?;
        let mut names = BTreeSet::new();
        for n in doc
            .zones
            .iter()
            .map(|z| &z.name)
            .chain(doc.firewalls.iter().map(|f| &f.name))
        {
            if !names.insert(n.as_str()) {
                return Err(invalid(format!(
                    "node name `{n}` is declared more than once"
                )));
            }
        }

        let mut interfaces: Vec<Interface> = Vec::new();
        let mut iface_index: BTreeMap<String, IfaceId> = BTreeMap::new();
        let addr_w = layout.width(roles.src_addr);
        let mut zones = Vec::with_capacity(doc.zones.len());
        let mut rest_zone = None;
        for (i, z) in doc.zones.iter().enumerate() {
            let interface = add_iface(&mut interfaces, &mut iface_index, &z.interface, NodeId(i))?;
            let ctx = format!("zone `{}`", z.name);
            let addr = match (&z.addr, z.rest) {
                (Some(_), true) => {
                    return Err(invalid(format!("{ctx}: a rest zone must not declare addr")))
                }
                (None, false) => return Err(invalid(format!("{ctx}: missing addr"))),
                (None, true) => {
                    if rest_zone.replace(i).is_some() {
                        return Err(invalid("at most one zone may be the rest zone"));
                    }
                    ValueSet::empty()
                }
                (Some(a), false) => {
                    let set = parse_set(&layout, roles.src_addr, a, &ctx)?;
                    if set.is_empty_in(addr_w) {
                        return Err(invalid(format!("{ctx}: address set is empty")));
                    }
                    set
                }
            };
            let ports = match &z.ports {
                None => None,
                Some(p) => {
                    let f = roles.src_port.ok_or_else(|| {
                        invalid(format!(
                            "{ctx}: ports given but the layout has no port fields"
                        ))
                    })?;
                    Some(parse_set(&layout, f, p, &ctx)?)
                }
            };
            zones.push(Zone {
                name: z.name.clone(),
                interface,
                addr,
                ports,
                rest: z.rest,
            });
        }
        for i in 0..zones.len() {
            for j in i + 1..zones.len() {
                if zones[i].rest || zones[j].rest {
                    continue;
                }
                if ranges_overlap(zones[i].addr.ranges(), zones[j].addr.ranges()) {
                    return Err(invalid(format!(
                        "zones `{}` and `{}` have overlapping address sets",
                        zones[i].name, zones[j].name
                    )));
                }
            }
        }
        if let Some(r) = rest_zone {
            let others: Vec<(u64, u64)> = zones
                .iter()
                .filter(|z| !z.rest)
                .flat_map(|z| z.addr.ranges().iter().copied())
                .collect();
            let addr = ValueSet::new(others, true).normalized(addr_w);
            if addr.is_empty_in(addr_w) {
                return Err(invalid(format!(
                    "rest zone `{}` has no addresses left",
                    zones[r].name
                )));
            }
            zones[r].addr = addr;
        }

        let mut ids = RuleIds::new(doc)?;
        let mut firewalls = Vec::with_capacity(doc.firewalls.len());
        for (k, f) in doc.firewalls.iter().enumerate() {
            let node = NodeId(zones.len() + k);
            let ctx = format!("firewall `{}`", f.name);
            let ifaces = f
                .interfaces
                .iter()
                .map(|i| add_iface(&mut interfaces, &mut iface_index, i, node))
                .collect::<Result<Vec<_>, _>>()?;
            let nat_table = |rules: &[NatDoc], ids: &mut RuleIds, snat: bool| {
                let mut out = Vec::with_capacity(rules.len());
                for r in rules {
                    let id = ids.take(r.id);
                    let rctx = format!("{ctx}: rule {}", id.0);
                    let field = layout.field_id(&r.field).map_err(|_| {
                        invalid(format!("{rctx}: NAT writes unknown field `{}`", r.field))
                    })?;
                    let ok = if snat {
                        roles.is_source(field)
                    } else {
                        roles.is_destination(field)
                    };
                    if !ok {
                        return Err(invalid(format!(
                            "{rctx}: {} rules must write a {} field, not `{}`",
                            if snat { "SNAT" } else { "DNAT" },
                            if snat { "source" } else { "destination" },
                            r.field
                        )));
                    }
                    if parse_value_set(&r.to, layout.width(field))
                        .map(|v| v.is_negated())
                        .unwrap_or(false)
                    {
                        return Err(invalid(format!("{rctx}: NAT target must not be negated")));
                    }
                    let to = parse_set(&layout, field, &r.to, &rctx)?;
                    if to.is_empty_in(layout.width(field)) {
                        return Err(invalid(format!("{rctx}: NAT target is empty")));
                    }
                    out.push(NatRule {
                        id,
                        guard: parse_guard(&layout, &r.guard, &rctx)?,
                        field,
                        to,
                    });
                }
                Ok(out)
            };
            let dnat = nat_table(&f.dnat, &mut ids, false)?;
            let mut filter = Vec::with_capacity(f.filter.len());
            for r in &f.filter {
                let id = ids.take(r.id);
                filter.push(FilterRule {
                    id,
                    guard: parse_guard(&layout, &r.guard, &format!("{ctx}: rule {}", id.0))?,
                    action: match r.action {
                        ActionDoc::Drop => Action::Drop,
                        ActionDoc::Accept => Action::Accept,
                    },
                });
            }
            match filter.last() {
                Some(last) if last.guard.is_true(&layout) => {}
                _ => {
                    return Err(invalid(format!(
                        "{ctx}: filter table is missing default rule (last rule must have an empty guard)"
                    )))
                }
            }
            let snat = nat_table(&f.snat, &mut ids, true)?;
            let mut routing = BTreeMap::new();
            for (iface, g) in &f.routing {
                let id = iface_index
                    .get(iface)
                    .copied()
                    .filter(|id| ifaces.contains(id))
                    .ok_or_else(|| {
                        invalid(format!(
                            "{ctx}: routing names `{iface}`, which is not one of its interfaces"
                        ))
                    })?;
                routing.insert(
                    id,
                    parse_guard(&layout, g, &format!("{ctx}: routing `{iface}`"))?,
                );
            }
            firewalls.push(Firewall {
                name: f.name.clone(),
                interfaces: ifaces,
                dnat,
                filter,
                snat,
                routing,
            });
        }

        let mut peer = vec![None; interfaces.len()];
        let mut links = Vec::with_capacity(doc.links.len());
        for [a, b] in &doc.links {
            let lookup = |n: &str| {
                iface_index
                    .get(n)
                    .copied()
                    .ok_or_else(|| invalid(format!("link names unknown interface `{n}`")))
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            if ia == ib {
                return Err(invalid(format!("link joins interface `{a}` to itself")));
            }
            if interfaces[ia.0].node == interfaces[ib.0].node {
                return Err(invalid(format!(
                    "link `{a}`-`{b}` joins two interfaces of the same node"
                )));
            }
            for i in [ia, ib] {
                if peer[i.0].is_some() {
                    return Err(invalid(format!(
                        "interface `{}` has more than one link",
                        interfaces[i.0].name
                    )));
                }
            }
            peer[ia.0] = Some(ib);
            peer[ib.0] = Some(ia);
            links.push((ia, ib));
        }
        for z in &zones {
            if peer[z.interface.0].is_none() {
                return Err(invalid(format!(
                    "zone `{}` must have exactly one link",
                    z.name
                )));
            }
        }

        Ok(Network {
            name: doc.name.clone(),
            layout,
            roles,
            zones,
            firewalls,
            interfaces,
            links,
            peer,
        })
    }

    /// The document form, with every rule id explicit.
    pub fn to_doc(&self) -> NetworkDoc {
        let l = &self.layout;
        let set = |f: FieldId, v: &ValueSet| format_value_set(v, l.width(f));
        let guard = |g: &Guard| -> GuardDoc {
            g.atoms()
                .map(|(f, v)| (l.name(f).to_string(), set(f, v)))
                .collect()
        };
        let nat = |rs: &[NatRule]| -> Vec<NatDoc> {
            rs.iter()
                .map(|r| NatDoc {
                    id: Some(r.id.0),
                    guard: guard(&r.guard),
                    field: l.name(r.field).to_string(),
                    to: set(r.field, &r.to),
                })
                .collect()
        };
        let layout = self.layout_doc();
        NetworkDoc {
            version: SCHEMA_VERSION,
            name: self.name.clone(),
            layout,
            zones: self
                .zones
                .iter()
                .map(|z| ZoneDoc {
                    name: z.name.clone(),
                    interface: self.iface_name(z.interface).to_string(),
                    addr: (!z.rest).then(|| set(self.roles.src_addr, &z.addr)),
                    rest: z.rest,
                    ports: z
                        .ports
                        .as_ref()
                        .map(|p| set(self.roles.src_port.expect("validated port role"), p)),
                })
                .collect(),
            firewalls: self
                .firewalls
                .iter()
                .map(|f| FirewallDoc {
                    name: f.name.clone(),
                    interfaces: f
                        .interfaces
                        .iter()
                        .map(|i| self.iface_name(*i).to_string())
                        .collect(),
                    dnat: nat(&f.dnat),
                    filter: f
                        .filter
                        .iter()
                        .map(|r| FilterDoc {
                            id: Some(r.id.0),
                            guard: guard(&r.guard),
                            action: match r.action {
                                Action::Drop => ActionDoc::Drop,
                                Action::Accept => ActionDoc::Accept,
                            },
                        })
                        .collect(),
                    snat: nat(&f.snat),
                    routing: f
                        .routing
                        .iter()
                        .map(|(i, g)| (self.iface_name(*i).to_string(), guard(g)))
                        .collect(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|(a, b)| {
                    [
                        self.iface_name(*a).to_string(),
                        self.iface_name(*b).to_string(),
                    ]
                })
                .collect(),
        }
    }

    fn layout_doc(&self) -> LayoutDoc {
        let r = &self.roles;
        let std_roles = |s, d, sp: Option<&str>, dp: Option<&str>| {
            let name = |f: FieldId| self.layout.name(f);
            name(r.src_addr) == s
                && name(r.dst_addr) == d
                && r.src_port.map(name) == sp
                && r.dst_port.map(name) == dp
        };
        if self.layout == HeaderLayout::addr2() && std_roles("s", "d", None, None) {
            return LayoutDoc::Named("addr2".into());
        }
        if self.layout == HeaderLayout::ipv4lite() && std_roles("s", "d", Some("sp"), Some("dp")) {
            return LayoutDoc::Named("ipv4lite".into());
        }
        let name = |f: FieldId| self.layout.name(f).to_string();
        LayoutDoc::Custom(CustomLayoutDoc {
            fields: self.layout.fields().to_vec(),
            src_addr: name(r.src_addr),
            dst_addr: name(r.dst_addr),
            src_port: r.src_port.map(name),
            dst_port: r.dst_port.map(name),
        })
    }

    /// Pretty-printed JSON configuration.
    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("serializable document")
    }
}
