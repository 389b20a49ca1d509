//! Generated networks: seeded random trials and the k-router cycle family.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::literal::format_value_set;
use crate::netmodel::{
    config::{
        ActionDoc, CustomLayoutDoc, FilterDoc, FirewallDoc, GuardDoc, LayoutDoc, NatDoc, ZoneDoc,
    },
    Network, NetworkDoc,
};
use crate::pktset::{FieldSpec, ValueSet};

/// Limits of the random trial population.
pub const MAX_NODES: usize = 6;
pub const MAX_HEADER_BITS: u32 = 12;

struct Fields {
    addr: u32,
    port: Option<u32>,
}

impl Fields {
    fn layout(&self) -> LayoutDoc {
        let mut fields = vec![
            FieldSpec {
                name: "s".into(),
                width: self.addr,
            },
            FieldSpec {
                name: "d".into(),
                width: self.addr,
            },
        ];
        if let Some(w) = self.port {
            fields.push(FieldSpec {
                name: "p".into(),
                width: w,
            });
        }
        LayoutDoc::Custom(CustomLayoutDoc {
            fields,
            src_addr: "s".into(),
            dst_addr: "d".into(),
            src_port: None,
            dst_port: self.port.map(|_| "p".into()),
        })
    }

    fn names(&self) -> Vec<(&'static str, u32)> {
        let mut v = vec![("s", self.addr), ("d", self.addr)];
        if let Some(w) = self.port {
            v.push(("p", w));
        }
        v
    }
}

fn max_of(width: u32) -> u64 {
    (1u64 << width) - 1
}

fn random_range(rng: &mut ChaCha8Rng, width: u32) -> (u64, u64) {
    let max = max_of(width);
    let a = rng.gen_range(0..=max);
    let span = rng.gen_range(0..=max.min(3));
    (a, (a + span).min(max))
}

fn random_set(rng: &mut ChaCha8Rng, width: u32) -> ValueSet {
    let n = rng.gen_range(1..=2);
    let ranges: Vec<(u64, u64)> = (0..n).map(|_| random_range(rng, width)).collect();
    ValueSet::new(ranges, rng.gen_bool(0.25))
}

fn random_guard(rng: &mut ChaCha8Rng, fields: &Fields, max_atoms: usize) -> GuardDoc {
    let names = fields.names();
    let n = rng.gen_range(0..=max_atoms.min(names.len()));
    let mut g = GuardDoc::new();
    for &(name, width) in names.choose_multiple(rng, n) {
        g.insert(
            name.into(),
            format_value_set(&random_set(rng, width), width),
        );
    }
    g
}

fn random_nat(rng: &mut ChaCha8Rng, fields: &Fields, snat: bool) -> NatDoc {
    let (field, width) = if snat {
        ("s", fields.addr)
    } else {
        match fields.port {
            Some(w) if rng.gen_bool(0.3) => ("p", w),
            _ => ("d", fields.addr),
        }
    };
    let (lo, hi) = random_range(rng, width);
    let hi = lo + (hi - lo).min(1);
    NatDoc {
        id: None,
        guard: random_guard(rng, fields, 2),
        field: field.into(),
        to: format_value_set(&ValueSet::range(lo, hi), width),
    }
}

/// One random network document: 2–3 zones, 1–3 firewalls, at most
/// [`MAX_NODES`] nodes and [`MAX_HEADER_BITS`] header bits, at most four
/// rules per table.
pub fn random_doc(rng: &mut ChaCha8Rng) -> NetworkDoc {
    let addr = rng.gen_range(2..=4u32);
    let port = (rng.gen_bool(0.3) && 2 * addr < MAX_HEADER_BITS)
        .then(|| rng.gen_range(1..=(MAX_HEADER_BITS - 2 * addr).min(2)));
    let fields = Fields { addr, port };
    let n_zones = rng.gen_range(2..=3usize);
    let n_fw = rng.gen_range(1..=(MAX_NODES - n_zones).min(3));

    // Disjoint zone address blocks cut from a shuffled partition.
    let max = max_of(addr);
    let mut cuts: Vec<u64> = (1..=max).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u64> = cuts.into_iter().take(n_zones).collect();
    cuts.sort_unstable();
    let with_rest = rng.gen_bool(0.4);
    let mut zones = Vec::new();
    let mut start = 0;
    for (i, &end) in cuts.iter().enumerate() {
        let rest = with_rest && i == n_zones - 1;
        let block = (start, end - 1);
        start = end;
        let (lo, hi) = block;
        let hi = if rng.gen_bool(0.5) {
            lo + (hi - lo) / 2
        } else {
            hi
        };
        zones.push(ZoneDoc {
            name: format!("Z{}", i + 1),
            interface: format!("z{}", i + 1),
            addr: (!rest).then(|| format_value_set(&ValueSet::range(lo, hi), addr)),
            rest,
            ports: None,
        });
    }

    let mut ifaces: Vec<Vec<String>> = vec![Vec::new(); n_fw];
    let mut links: Vec<[String; 2]> = Vec::new();
    let attach = |ifaces: &mut Vec<Vec<String>>, fw: usize| {
        let name = format!("f{}-{}", fw + 1, ifaces[fw].len() + 1);
        ifaces[fw].push(name.clone());
        name
    };
    for (i, z) in zones.iter().enumerate() {
        let fw = if i < n_fw { i } else { rng.gen_range(0..n_fw) };
        let name = attach(&mut ifaces, fw);
        links.push([z.interface.clone(), name]);
    }
    for k in 1..n_fw {
        let parent = rng.gen_range(0..k);
        let a = attach(&mut ifaces, k);
        let b = attach(&mut ifaces, parent);
        links.push([a, b]);
    }
    if n_fw >= 2 && rng.gen_bool(0.4) {
        let a = rng.gen_range(0..n_fw);
        let mut b = rng.gen_range(0..n_fw - 1);
        if b >= a {
            b += 1;
        }
        let x = attach(&mut ifaces, a);
        let y = attach(&mut ifaces, b);
        links.push([x, y]);
    }

    let zone_addrs: Vec<String> = zones.iter().filter_map(|z| z.addr.clone()).collect();
    let firewalls = (0..n_fw)
        .map(|k| {
            let dnat = (0..rng.gen_range(0..=2))
                .map(|_| random_nat(rng, &fields, false))
                .collect();
            let snat = (0..rng.gen_range(0..=2))
                .map(|_| random_nat(rng, &fields, true))
                .collect();
            let mut filter: Vec<FilterDoc> = (0..rng.gen_range(0..=3))
                .map(|_| FilterDoc {
                    id: None,
                    guard: random_guard(rng, &fields, 2),
                    action: if rng.gen_bool(0.6) {
                        ActionDoc::Drop
                    } else {
                        ActionDoc::Accept
                    },
                })
                .collect();
            filter.push(FilterDoc {
                id: None,
                guard: GuardDoc::new(),
                action: if rng.gen_bool(0.85) {
                    ActionDoc::Accept
                } else {
                    ActionDoc::Drop
                },
            });
            let mut routing = BTreeMap::new();
            for i in &ifaces[k] {
                let roll = rng.gen_range(0..10);
                let g = match roll {
                    0 => continue,
                    1..=2 => GuardDoc::new(),
                    3..=6 if !zone_addrs.is_empty() => {
                        let a = zone_addrs.choose(rng).unwrap().clone();
                        GuardDoc::from([("d".to_string(), a)])
                    }
                    _ => random_guard(rng, &fields, 2),
                };
                routing.insert(i.clone(), g);
            }
            FirewallDoc {
                name: format!("F{}", k + 1),
                interfaces: ifaces[k].clone(),
                dnat,
                filter,
                snat,
                routing,
            }
        })
        .collect();

    NetworkDoc {
        version: crate::netmodel::config::SCHEMA_VERSION,
        name: None,
        layout: fields.layout(),
        zones,
        firewalls,
        links,
    }
}

/// A deterministic population of valid random networks.
pub fn random_networks(seed: u64, count: usize) -> Vec<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if let Ok(net) = Network::from_doc(&random_doc(&mut rng)) {
            out.push(net);
        }
    }
    out
}

/// `k` routers in a ring. The first rewrites source `j` to `j + 1` on every
/// pass and delivers to Z2 only once the source reaches `k + 1`, so a packet
/// from Z1 must circle the ring `k` times: `k² + 2` link traversals.
pub fn cycle_network(k: usize) -> Network {
    assert!((2..=12).contains(&k), "ring size must be 2..=12");
    let width = 4u32;
    let snat = (0..=k)
        .map(|j| NatDoc {
            id: None,
            guard: GuardDoc::from([("s".into(), j.to_string())]),
            field: "s".into(),
            to: (j + 1).to_string(),
        })
        .collect();
    let accept_all = || {
        vec![FilterDoc {
            id: None,
            guard: GuardDoc::new(),
            action: ActionDoc::Accept,
        }]
    };
    let mut firewalls = vec![FirewallDoc {
        name: "R1".into(),
        interfaces: vec![
            "r1-z1".into(),
            "r1-z2".into(),
            "r1-next".into(),
            "r1-prev".into(),
        ],
        dnat: Vec::new(),
        filter: accept_all(),
        snat,
        routing: BTreeMap::from([
            (
                "r1-next".to_string(),
                GuardDoc::from([("s".into(), format!("1-{k}"))]),
            ),
            (
                "r1-z2".to_string(),
                GuardDoc::from([("s".into(), (k + 1).to_string()), ("d".into(), "14".into())]),
            ),
        ]),
    }];
    for r in 2..=k {
        firewalls.push(FirewallDoc {
            name: format!("R{r}"),
            interfaces: vec![format!("r{r}-prev"), format!("r{r}-next")],
            dnat: Vec::new(),
            filter: accept_all(),
            snat: Vec::new(),
            routing: BTreeMap::from([(format!("r{r}-next"), GuardDoc::new())]),
        });
    }
    let mut links = vec![
        ["z1".to_string(), "r1-z1".to_string()],
        ["z2".to_string(), "r1-z2".to_string()],
    ];
    for r in 1..=k {
        let next = if r == k { 1 } else { r + 1 };
        links.push([format!("r{r}-next"), format!("r{next}-prev")]);
    }
    let doc = NetworkDoc {
        version: crate::netmodel::config::SCHEMA_VERSION,
        name: Some(format!("ring-{k}")),
        layout: Fields {
            addr: width,
            port: None,
        }
        .layout(),
        zones: vec![
            ZoneDoc {
                name: "Z1".into(),
                interface: "z1".into(),
                addr: Some("0".into()),
                rest: false,
                ports: None,
            },
            ZoneDoc {
                name: "Z2".into(),
                interface: "z2".into(),
                addr: Some("14".into()),
                rest: false,
                ports: None,
            },
        ],
        firewalls,
        links,
    };
    Network::from_doc(&doc).expect("ring network is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_population_is_deterministic_and_bounded() {
        let a = random_networks(7, 30);
        let b = random_networks(7, 30);
        assert_eq!(a, b);
        for n in &a {
            assert!(n.node_count() <= MAX_NODES);
            assert!(n.layout.pk_size() <= MAX_HEADER_BITS);
            for f in &n.firewalls {
                assert!(f.dnat.len() <= 4 && f.filter.len() <= 4 && f.snat.len() <= 4);
            }
        }
    }

    #[test]
    fn ring_has_expected_shape() {
        let n = cycle_network(3);
        assert_eq!(n.firewalls.len(), 3);
        assert_eq!(n.links.len(), 5);
        assert_eq!(n.firewalls[0].snat.len(), 4);
    }
}
