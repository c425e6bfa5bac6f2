//! Versioned binary container for a trained model.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header describing topology and tensor shapes, then for every tensor its
//! values followed by both Adam moments as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{
    Controller, ControllerConfig, ControllerState, GlobalGroup, GroupCaps, GroupTree, LocalGroup,
};
use crate::nn::{
    HeadNet, IdEmbeddings, Lstm, Mlp, NetDims, ParamSet, Tensor, TrajectoryEncoder, TrunkNet,
};
use crate::ppo::Grouping;

pub const MAGIC: &[u8; 8] = b"HAGPSCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SetHeader {
    step: u64,
    tensors: Vec<TensorHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpHeader {
    sizes: Vec<usize>,
    set: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GlobalHeader {
    id: u32,
    trunk: MlpHeader,
}

#[derive(Debug, Serialize, Deserialize)]
struct LocalHeader {
    id: u32,
    global: u32,
    agents: Vec<usize>,
    policy: MlpHeader,
    value: MlpHeader,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderHeader {
    input: usize,
    hidden: usize,
    kl_weight: f64,
    lstm: usize,
    mean: MlpHeader,
    logvar: MlpHeader,
    decoder: MlpHeader,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum GroupingHeader {
    Fixed,
    Adaptive {
        config: ControllerConfig,
        state: ControllerState,
        seed: u64,
    },
    OneShot {
        after: usize,
        groups: usize,
        seed: u64,
        done: bool,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dims: NetDims,
    caps: GroupCaps,
    next_local_id: u32,
    globals: Vec<GlobalHeader>,
    locals: Vec<LocalHeader>,
    ids_enabled: bool,
    ids: usize,
    encoder: Option<EncoderHeader>,
    grouping: GroupingHeader,
    sets: Vec<SetHeader>,
    meta: serde_json::Value,
}

/// A loaded model plus free-form metadata recorded at save time.
#[derive(Debug)]
pub struct Checkpoint {
    pub tree: GroupTree,
    pub grouping: Grouping,
    pub encoder: Option<TrajectoryEncoder>,
    pub meta: serde_json::Value,
}

struct Writer<'a> {
    sets: Vec<SetHeader>,
    data: Vec<&'a ParamSet>,
}

impl<'a> Writer<'a> {
    fn add(&mut self, set: &'a ParamSet) -> usize {
        self.sets.push(SetHeader {
            step: set.step_count(),
            tensors: set
                .iter()
                .map(|p| TensorHeader {
                    name: p.name().to_string(),
                    shape: p.value().shape().to_vec(),
                })
                .collect(),
        });
        self.data.push(set);
        self.sets.len() - 1
    }

    fn mlp(&mut self, m: &'a Mlp) -> MlpHeader {
        MlpHeader {
            sizes: m.sizes().to_vec(),
            set: self.add(m.params()),
        }
    }
}

pub fn to_bytes(
    tree: &GroupTree,
    grouping: &Grouping,
    encoder: Option<&TrajectoryEncoder>,
    meta: serde_json::Value,
) -> Result<Vec<u8>> {
    let mut w = Writer {
        sets: Vec::new(),
        data: Vec::new(),
    };
    let globals = tree
        .globals()
        .iter()
        .map(|g| GlobalHeader {
            id: g.id,
            trunk: w.mlp(&g.trunk.mlp),
        })
        .collect();
    let locals = tree
        .locals()
        .iter()
        .map(|l| LocalHeader {
            id: l.id,
            global: l.global,
            agents: l.agents.clone(),
            policy: w.mlp(&l.head.policy),
            value: w.mlp(&l.head.value),
        })
        .collect();
    let ids = w.add(tree.ids().params());
    let encoder = encoder.map(|e| EncoderHeader {
        input: e.input_dim(),
        hidden: e.lstm().hidden_dim(),
        kl_weight: e.kl_weight,
        lstm: w.add(e.lstm().params()),
        mean: w.mlp(e.mean_map()),
        logvar: w.mlp(e.logvar_map()),
        decoder: w.mlp(e.decoder()),
    });
    let grouping = match grouping {
        Grouping::Fixed => GroupingHeader::Fixed,
        Grouping::Adaptive(c) => GroupingHeader::Adaptive {
            config: c.config().clone(),
            state: c.state().clone(),
            seed: c.seed(),
        },
        Grouping::OneShot {
            after,
            groups,
            seed,
            done,
        } => GroupingHeader::OneShot {
            after: *after,
            groups: *groups,
            seed: *seed,
            done: *done,
        },
    };
    let header = Header {
        version: VERSION,
        dims: *tree.dims(),
        caps: *tree.caps(),
        next_local_id: tree.next_local_id(),
        globals,
        locals,
        ids_enabled: tree.ids().enabled(),
        ids,
        encoder,
        grouping,
        sets: w.sets,
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 20);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for set in w.data {
        for p in set.iter() {
            let (m, v) = p.moments();
            for x in p.value().data().iter().chain(m).chain(v) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save(
    path: &Path,
    tree: &GroupTree,
    grouping: &Grouping,
    encoder: Option<&TrajectoryEncoder>,
    meta: serde_json::Value,
) -> Result<()> {
    crate::util::write_atomic(path, &to_bytes(tree, grouping, encoder, meta)?)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(20..20 + hlen)
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let mut cursor = 20 + hlen;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let end = cursor + 8 * n;
        let raw = bytes
            .get(cursor..end)
            .ok_or_else(|| bad("truncated tensor data"))?;
        cursor = end;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let mut sets: Vec<Option<ParamSet>> = Vec::with_capacity(header.sets.len());
    for sh in &header.sets {
        let mut set = ParamSet::new();
        for th in &sh.tensors {
            let n: usize = th.shape.iter().product();
            let value = Tensor::new(th.shape.clone(), take(n)?)?;
            let i = set.push(th.name.clone(), value);
            let (m, v) = (take(n)?, take(n)?);
            set.get_mut(i).set_moments(m, v)?;
        }
        set.set_step_count(sh.step);
        sets.push(Some(set));
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let globals = header
        .globals
        .iter()
        .map(|g| {
            Ok(GlobalGroup {
                id: g.id,
                trunk: TrunkNet {
                    mlp: mlp_from(&mut sets, &g.trunk)?,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let locals = header
        .locals
        .iter()
        .map(|l| {
            Ok(LocalGroup {
                id: l.id,
                global: l.global,
                head: HeadNet {
                    policy: mlp_from(&mut sets, &l.policy)?,
                    value: mlp_from(&mut sets, &l.value)?,
                    m_dir: header.dims.m_dir,
                },
                agents: l.agents.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let encoder = match &header.encoder {
        Some(e) => Some(TrajectoryEncoder::from_parts(
            Lstm::from_params(e.input, e.hidden, claim_set(&mut sets, e.lstm)?)?,
            mlp_from(&mut sets, &e.mean)?,
            mlp_from(&mut sets, &e.logvar)?,
            mlp_from(&mut sets, &e.decoder)?,
            e.kl_weight,
        )?),
        None => None,
    };
    let ids = IdEmbeddings::from_params(
        claim_set(&mut sets, header.ids)?,
        header.dims.id_dim,
        header.ids_enabled,
    )?;
    let mut tree = GroupTree::from_parts(header.dims, header.caps, globals, locals, ids)?;
    tree.set_next_local_id(header.next_local_id);
    let grouping = match header.grouping {
        GroupingHeader::Fixed => Grouping::Fixed,
        GroupingHeader::Adaptive {
            config,
            state,
            seed,
        } => Grouping::Adaptive(Controller::from_state(config, state, seed)?),
        GroupingHeader::OneShot {
            after,
            groups,
            seed,
            done,
        } => Grouping::OneShot {
            after,
            groups,
            seed,
            done,
        },
    };
    Ok(Checkpoint {
        tree,
        grouping,
        encoder,
        meta: header.meta,
    })
}

fn claim_set(sets: &mut [Option<ParamSet>], i: usize) -> Result<ParamSet> {
    sets.get_mut(i)
        .and_then(Option::take)
        .ok_or_else(|| bad(format!("bad set index {i}")))
}

fn mlp_from(sets: &mut [Option<ParamSet>], h: &MlpHeader) -> Result<Mlp> {
    Mlp::from_params(h.sizes.clone(), claim_set(sets, h.set)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::ControllerConfig;
    use crate::nn::{adam_update, AdamConfig};
    use crate::ppo::Actor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> (GroupTree, Grouping, TrajectoryEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = NetDims {
            state_dim: 3,
            trunk_hidden: 5,
            embed_dim: 4,
            id_dim: 2,
            head_hidden: 6,
            m_dir: 2,
        };
        let ids = IdEmbeddings::new(4, 2, true, &mut rng);
        let mut tree = GroupTree::new(
            dims,
            GroupCaps::default(),
            &[(0, 0), (0, 0), (1, 0), (0, 0)],
            ids,
            &mut rng,
        )
        .unwrap();
        tree.split_local(0, vec![vec![0], vec![1, 3]]).unwrap();
        // One optimizer step so the moments are nonzero.
        for (set, _) in tree.param_sets_mut() {
            for p in set.iter() {
                p.accumulate(&vec![0.1; p.value().len()]);
            }
            adam_update(set, 1e-3, &AdamConfig::default());
        }
        let ctrl = Controller::new(ControllerConfig::default(), 5).unwrap();
        let enc = TrajectoryEncoder::new(3, 4, 2, 1e-3, &mut rng);
        (tree, Grouping::Adaptive(ctrl), enc)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (tree, grouping, enc) = model();
        let bytes = to_bytes(
            &tree,
            &grouping,
            Some(&enc),
            serde_json::json!({"mode": "hagps"}),
        )
        .unwrap();
        let ck = from_bytes(&bytes).unwrap();
        assert_eq!(ck.meta["mode"], "hagps");
        assert_eq!(ck.tree.assignment(), tree.assignment());
        let state = [0.3, -1.2, 0.7];
        let open = [[true; 4]; 4];
        let a = tree.evaluate(&state, &open).unwrap();
        let b = ck.tree.evaluate(&state, &open).unwrap();
        for ((da, va), (db, vb)) in a.iter().zip(&b) {
            assert_eq!(va.to_bits(), vb.to_bits());
            for d in 0..4 {
                assert!(da
                    .log_probs(d)
                    .iter()
                    .zip(db.log_probs(d))
                    .all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        let w = [vec![0.1, 0.2, 0.3], vec![-0.4, 0.0, 1.0]];
        assert_eq!(
            enc.lstm_encode(&w).unwrap(),
            ck.encoder.as_ref().unwrap().lstm_encode(&w).unwrap()
        );
        let p0 = tree.locals()[0].head.policy.params();
        let q0 = ck.tree.locals()[0].head.policy.params();
        assert_eq!(p0.step_count(), q0.step_count());
        assert_eq!(p0.get(0).moments(), q0.get(0).moments());
        // Re-serializing reproduces the same bytes.
        let again = to_bytes(&ck.tree, &ck.grouping, ck.encoder.as_ref(), ck.meta.clone()).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let (tree, grouping, enc) = model();
        let bytes = to_bytes(&tree, &grouping, Some(&enc), serde_json::Value::Null).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(from_bytes(&wrong).is_err());
        let mut ver = bytes;
        ver[8] = 99;
        assert!(matches!(from_bytes(&ver), Err(Error::Checkpoint(_))));
    }
}
