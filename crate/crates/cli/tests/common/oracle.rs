//! Brute-force reference for segmentation, ft aggregation and the raw
//! features. Written from the definitions, sharing nothing with the library
//! beyond the record type.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;

use scadascope_core::PacketRecord;

pub type End = (Ipv4Addr, u16);

#[derive(Debug, Clone, PartialEq)]
pub struct RefSegment {
    pub a: End,
    pub b: End,
    pub start: f64,
    pub end: f64,
    pub size: u64,
    pub initiator: End,
    pub responder: End,
    pub packets: u64,
}

/// Sort every conversation's packets by (time, input position) and cut
/// wherever the gap to the previous packet reaches `t_comm`.
pub fn segments(records: &[PacketRecord], t_comm: f64) -> Vec<RefSegment> {
    let mut groups: HashMap<(End, End), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let s = (r.src_ip, r.src_port);
        let d = (r.dst_ip, r.dst_port);
        groups.entry((s.min(d), s.max(d))).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((a, b), mut idx) in groups {
        idx.sort_by(|&x, &y| records[x].timestamp.total_cmp(&records[y].timestamp).then(x.cmp(&y)));
        let mut cur: Option<RefSegment> = None;
        for i in idx {
            let r = &records[i];
            let split = match &cur {
                Some(seg) => r.timestamp - seg.end >= t_comm,
                None => true,
            };
            if split {
                if let Some(seg) = cur.take() {
                    out.push(seg);
                }
                let init = (r.src_ip, r.src_port);
                let resp = (r.dst_ip, r.dst_port);
                cur = Some(RefSegment {
                    a,
                    b,
                    start: r.timestamp,
                    end: r.timestamp,
                    size: 0,
                    initiator: init,
                    responder: resp,
                    packets: 0,
                });
            }
            let seg = cur.as_mut().unwrap();
            seg.end = r.timestamp;
            seg.size += u64::from(r.size);
            seg.packets += 1;
        }
        out.extend(cur);
    }
    out.sort_by(|x, y| {
        x.start
            .total_cmp(&y.start)
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    out
}

pub type RefKey = (Ipv4Addr, u16, Ipv4Addr, u16, u64);

#[derive(Debug, Clone, PartialEq)]
pub struct RefFt {
    pub n: u64,
    pub starts: Vec<f64>,
    pub iat: Vec<f64>,
}

pub fn fts(segs: &[RefSegment]) -> BTreeMap<RefKey, RefFt> {
    let mut starts: BTreeMap<RefKey, Vec<f64>> = BTreeMap::new();
    for s in segs {
        let key = (s.initiator.0, s.initiator.1, s.responder.0, s.responder.1, s.size);
        starts.entry(key).or_default().push(s.start);
    }
    starts
        .into_iter()
        .map(|(k, mut st)| {
            st.sort_by(f64::total_cmp);
            let mut iat = Vec::new();
            for i in 1..st.len() {
                iat.push(st[i] - st[i - 1]);
            }
            (
                k,
                RefFt {
                    n: st.len() as u64,
                    starts: st,
                    iat,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefFeatures {
    pub pr: f64,
    pub dr: f64,
    pub cr: f64,
    pub ur: f64,
    pub sr: f64,
}

impl RefFeatures {
    pub fn as_array(&self) -> [f64; 5] {
        [self.pr, self.dr, self.cr, self.ur, self.sr]
    }
}

fn gap(a: f64, b: f64) -> f64 {
    if a >= b {
        a / b
    } else {
        b / a
    }
}

/// Raw features with the default cap and natural log.
pub fn features(fts: &BTreeMap<RefKey, RefFt>, records: &[PacketRecord], cap: f64) -> BTreeMap<RefKey, RefFeatures> {
    // ports each ip used as its own endpoint, straight from the packets
    let mut ports: HashMap<Ipv4Addr, BTreeSet<u16>> = HashMap::new();
    for r in records {
        ports.entry(r.src_ip).or_default().insert(r.src_port);
        ports.entry(r.dst_ip).or_default().insert(r.dst_port);
    }
    // (port, is_src) -> distinct (src_ip, dst_ip) pairs
    let mut pu: HashMap<(u16, bool), BTreeSet<(Ipv4Addr, Ipv4Addr)>> = HashMap::new();
    for k in fts.keys() {
        pu.entry((k.1, true)).or_default().insert((k.0, k.2));
        pu.entry((k.3, false)).or_default().insert((k.0, k.2));
    }
    let max_size = fts.keys().map(|k| k.4).max().unwrap_or(1);

    fts.iter()
        .map(|(k, ft)| {
            let m = ft.iat.len();
            let pr = if m < 2 {
                0.0
            } else {
                let mut sum = 0.0;
                for x in &ft.iat {
                    sum += x;
                }
                let mean = sum / m as f64;
                let mut ss = 0.0;
                for x in &ft.iat {
                    ss += (x - mean) * (x - mean);
                }
                let var = ss / m as f64;
                if var == 0.0 {
                    cap
                } else {
                    mean / var
                }
            };
            let total: f64 = ft.iat.iter().sum();
            let dr = total / 3600.0 * (ft.n as f64).ln();
            let cr = gap(ports[&k.0].len() as f64, ports[&k.2].len() as f64);
            let ur = gap(pu[&(k.1, true)].len() as f64, pu[&(k.3, false)].len() as f64);
            let sr = k.4 as f64 / max_size as f64;
            (*k, RefFeatures { pr, dr, cr, ur, sr })
        })
        .collect()
}

/// Scores: each feature over its dataset maximum, multiplied.
pub fn scores(feats: &BTreeMap<RefKey, RefFeatures>) -> BTreeMap<RefKey, f64> {
    let mut max = [0.0f64; 5];
    for f in feats.values() {
        for (m, v) in max.iter_mut().zip(f.as_array()) {
            *m = m.max(v);
        }
    }
    feats
        .iter()
        .map(|(k, f)| {
            let mut s = 1.0;
            for (v, m) in f.as_array().into_iter().zip(max) {
                s *= if m > 0.0 { v / m } else { 0.0 };
            }
            (*k, s)
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
