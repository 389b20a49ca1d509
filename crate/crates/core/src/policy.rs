//! Per-zone accept/reject policies and test-packet witnesses, derived from a
//! variant 2 analysis.

use crate::engine::{analyze, AnalysisResult, EngineError, Variant};
use crate::netmodel::{Network, NodeId};
use crate::pktset::{FieldValueSet, Formula, Header, PacketSpace};

/// Formulas over original headers leaving `zone`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicySummary {
    pub zone: NodeId,
    /// Originals that reach some other zone.
    pub accept: Formula,
    /// Originals dropped by some DROP rule.
    pub reject: Formula,
    pub overlap: Formula,
}

impl PolicySummary {
    pub fn has_overlap(&self, sp: &PacketSpace) -> bool {
        !sp.is_empty(self.overlap)
    }
}

/// Builds the policy from a variant 2 result.
pub fn summarize(
    sp: &mut PacketSpace,
    net: &Network,
    result: &AnalysisResult,
) -> Result<PolicySummary, EngineError> {
    if result.variant != Variant::V2 {
        return Err(EngineError::VariantMismatch(result.variant, Variant::V2));
    }
    let origs: Vec<Formula> = net
        .zone_ids()
        .filter(|&z| z != result.origin)
        .filter_map(|z| result.fact(z).orig(sp))
        .collect();
    let accept = sp.or_all(origs);
    let reject = result.ledger.union(sp);
    let overlap = sp.and(accept, reject);
    Ok(PolicySummary {
        zone: result.origin,
        accept,
        reject,
        overlap,
    })
}

/// Runs a variant 2 analysis from `zone` and summarizes it.
pub fn infer_policy(
    sp: &mut PacketSpace,
    net: &Network,
    zone: &str,
) -> Result<(PolicySummary, AnalysisResult), EngineError> {
    let result = analyze(sp, net, zone, Variant::V2)?;
    let summary = summarize(sp, net, &result)?;
    Ok((summary, result))
}

/// Per-field projections of the overlap; empty iff the overlap is.
pub fn overlap_report(sp: &mut PacketSpace, p: &PolicySummary) -> Vec<FieldValueSet> {
    if sp.is_empty(p.overlap) {
        return Vec::new();
    }
    let layout = sp.layout().clone();
    layout
        .field_ids()
        .map(|f| FieldValueSet::new(layout.name(f), sp.field_values(p.overlap, f)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestPacket {
    pub zone: NodeId,
    /// Header as sent from the origin.
    pub orig: Header,
    /// Header as it arrives at `zone`.
    pub curr: Header,
}

/// Up to `per_packet` witnesses per abstract packet at every zone other than
/// the origin, enumerating originals first.
pub fn witnesses(
    sp: &mut PacketSpace,
    net: &Network,
    result: &AnalysisResult,
    per_packet: usize,
) -> Vec<TestPacket> {
    let n = sp.layout().n_fields();
    let mut out = Vec::new();
    for z in net.zone_ids().filter(|&z| z != result.origin) {
        for p in result.fact(z).tracked_packets() {
            let mut taken = 0;
            'packet: for o in sp.enumerate(p.orig, per_packet) {
                let cube = sp.header_cube(o, p.unrewritten(n));
                let currs = sp.and(p.curr, cube);
                for c in sp.enumerate(currs, per_packet - taken) {
                    out.push(TestPacket {
                        zone: z,
                        orig: o,
                        curr: c,
                    });
                    taken += 1;
                    if taken == per_packet {
                        break 'packet;
                    }
                }
            }
        }
    }
    out
}

/// Runs a variant 2 analysis from `origin` and extracts witnesses.
pub fn generate_test_packets(
    sp: &mut PacketSpace,
    net: &Network,
    origin: &str,
    per_packet: usize,
) -> Result<Vec<TestPacket>, EngineError> {
    let result = analyze(sp, net, origin, Variant::V2)?;
    Ok(witnesses(sp, net, &result, per_packet.max(1)))
}
