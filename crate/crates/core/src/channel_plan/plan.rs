use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::KERNEL_AREA;
use crate::nn::{Architecture, ModelParams, Scalar, ScaleRate, TensorKind, NUM_BLOCKS};

/// Which server channels one client's sub-model occupies in one round.
///
/// Every index list is sorted and duplicate-free. The first block always reads
/// every image channel and the dense layer always writes every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    server: Architecture,
    outputs: Vec<Vec<usize>>,
    inputs: Vec<Vec<usize>>,
    dense_inputs: Vec<usize>,
}

fn check_indices(list: &[usize], bound: usize, what: &str) -> Result<()> {
    if list.is_empty() {
        return Err(Error::plan(format!("{what}: empty channel selection")));
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::plan(format!("{what}: indices not strictly increasing")));
    }
    if let Some(&last) = list.last() {
        if last >= bound {
            return Err(Error::plan(format!("{what}: index {last} out of range 0..{bound}")));
        }
    }
    Ok(())
}

impl ChannelPlan {
    /// Every channel of every block.
    pub fn full(server: &Architecture) -> Self {
        let outputs: Vec<Vec<usize>> = server.widths.iter().map(|&n| (0..n).collect()).collect();
        Self::coupled(server, outputs).expect("identity plan is valid")
    }

    /// Plan whose block inputs are the previous block's outputs.
    pub fn coupled(server: &Architecture, outputs: Vec<Vec<usize>>) -> Result<Self> {
        if outputs.len() != NUM_BLOCKS {
            return Err(Error::plan(format!("expected {NUM_BLOCKS} output lists")));
        }
        let mut inputs = Vec::with_capacity(NUM_BLOCKS);
        inputs.push((0..server.image_channels).collect());
        inputs.extend(outputs[..NUM_BLOCKS - 1].iter().cloned());
        let dense_inputs = outputs[NUM_BLOCKS - 1].clone();
        Self::independent(server, outputs, inputs, dense_inputs)
    }

    /// Plan with explicitly chosen input channels per block. Used to reproduce
    /// the uncoupled selection; input counts must still match the previous
    /// block's output count so the client network is well-formed.
    pub fn independent(
        server: &Architecture,
        outputs: Vec<Vec<usize>>,
        inputs: Vec<Vec<usize>>,
        dense_inputs: Vec<usize>,
    ) -> Result<Self> {
        if outputs.len() != NUM_BLOCKS || inputs.len() != NUM_BLOCKS {
            return Err(Error::plan(format!("expected {NUM_BLOCKS} blocks")));
        }
        for b in 0..NUM_BLOCKS {
            check_indices(&outputs[b], server.widths[b], &format!("block {b} outputs"))?;
            check_indices(&inputs[b], server.block_inputs(b), &format!("block {b} inputs"))?;
            let expect = if b == 0 {
                server.image_channels
            } else {
                outputs[b - 1].len()
            };
            if inputs[b].len() != expect {
                return Err(Error::plan(format!(
                    "block {b} reads {} channels but {expect} are produced",
                    inputs[b].len()
                )));
            }
        }
        check_indices(&dense_inputs, server.dense_inputs(), "dense inputs")?;
        if dense_inputs.len() != outputs[NUM_BLOCKS - 1].len() {
            return Err(Error::plan("dense input count differs from last block width"));
        }
        Ok(ChannelPlan {
            server: server.clone(),
            outputs,
            inputs,
            dense_inputs,
        })
    }

    pub fn server(&self) -> &Architecture {
        &self.server
    }

    pub fn outputs(&self, block: usize) -> &[usize] {
        &self.outputs[block]
    }

    pub fn inputs(&self, block: usize) -> &[usize] {
        &self.inputs[block]
    }

    pub fn dense_inputs(&self) -> &[usize] {
        &self.dense_inputs
    }

    pub fn is_coupled(&self) -> bool {
        (1..NUM_BLOCKS).all(|b| self.inputs[b] == self.outputs[b - 1])
            && self.dense_inputs == self.outputs[NUM_BLOCKS - 1]
    }

    pub fn is_full(&self) -> bool {
        *self == ChannelPlan::full(&self.server)
    }

    pub fn client_arch(&self) -> Architecture {
        let mut widths = [0; NUM_BLOCKS];
        for (w, o) in widths.iter_mut().zip(&self.outputs) {
            *w = o.len();
        }
        Architecture::from_widths(widths, self.server.image_channels, self.server.classes)
            .expect("validated plan has non-zero widths")
    }

    pub fn scale_rate(&self) -> ScaleRate {
        ScaleRate::from_widths(self.outputs[0].len(), self.server.widths[0])
            .expect("client width within server width")
    }

    /// For every tensor in canonical order, the server flat index of each
    /// client flat index.
    pub fn cell_maps(&self) -> Vec<(TensorKind, Vec<usize>)> {
        let s = &self.server;
        let mut maps = Vec::with_capacity(NUM_BLOCKS * 6 + 2);
        for b in 0..NUM_BLOCKS {
            let m = s.block_inputs(b);
            let mut conv = Vec::with_capacity(self.outputs[b].len() * self.inputs[b].len() * KERNEL_AREA);
            for &o in &self.outputs[b] {
                for &i in &self.inputs[b] {
                    let base = (o * m + i) * KERNEL_AREA;
                    conv.extend(base..base + KERNEL_AREA);
                }
            }
            maps.push((TensorKind::ConvWeight(b), conv));
            for kind in [
                TensorKind::ConvBias(b),
                TensorKind::BnGain(b),
                TensorKind::BnBias(b),
                TensorKind::BnMean(b),
                TensorKind::BnVar(b),
            ] {
                maps.push((kind, self.outputs[b].clone()));
            }
        }
        let m = s.dense_inputs();
        let mut dense = Vec::with_capacity(s.classes * self.dense_inputs.len());
        for k in 0..s.classes {
            dense.extend(self.dense_inputs.iter().map(|&j| k * m + j));
        }
        maps.push((TensorKind::DenseWeight, dense));
        maps.push((TensorKind::DenseBias, (0..s.classes).collect()));
        maps
    }

    pub fn record(&self, client: usize, round: usize) -> PlanRecord {
        PlanRecord {
            client,
            round,
            blocks: self
                .outputs
                .iter()
                .enumerate()
                .map(|(b, o)| (b.to_string(), o.clone()))
                .collect(),
        }
    }
}

/// One line of a plan dump: the output channels of every block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub client: usize,
    pub round: usize,
    pub blocks: BTreeMap<String, Vec<usize>>,
}

/// Client-sized copy of the server cells selected by `plan`.
pub fn extract_submodel<T: Scalar>(server: &ModelParams<T>, plan: &ChannelPlan) -> Result<ModelParams<T>> {
    if server.arch != plan.server {
        return Err(Error::plan(format!(
            "plan built for {:?}, server is {:?}",
            plan.server.widths, server.arch.widths
        )));
    }
    let mut client = ModelParams::<T>::zeros(&plan.client_arch());
    client.norm = server.norm;
    let maps = plan.cell_maps();
    for (((kind, dst), (_, src)), (_, map)) in client
        .tensors_mut()
        .into_iter()
        .zip(server.tensors())
        .zip(&maps)
    {
        debug_assert_eq!(dst.len(), map.len(), "{kind:?}");
        for (d, &i) in dst.iter_mut().zip(map) {
            *d = src[i];
        }
    }
    Ok(client)
}

/// One client's contribution to a round.
#[derive(Debug, Clone, Copy)]
pub struct Update<'a, T> {
    pub plan: &'a ChannelPlan,
    pub params: &'a ModelParams<T>,
    pub weight: f64,
}

/// Coverage-weighted merge of client sub-models into the server model.
///
/// A server cell covered by at least one client becomes the weighted mean of
/// the covering clients' values; an uncovered cell keeps its previous value.
/// With every plan full this is plain weighted parameter averaging.
pub fn integrate<T: Scalar>(server: &ModelParams<T>, updates: &[Update<'_, T>]) -> Result<ModelParams<T>> {
    if updates.is_empty() {
        warn!("integrate called with no client updates; server unchanged");
        return Ok(server.clone());
    }
    for (i, u) in updates.iter().enumerate() {
        if u.plan.server != server.arch {
            return Err(Error::plan(format!("update {i}: plan does not match server shape")));
        }
        if u.params.arch != u.plan.client_arch() {
            return Err(Error::plan(format!("update {i}: client params do not match its plan")));
        }
        if !(u.weight > 0.0 && u.weight.is_finite()) {
            return Err(Error::config(format!("update {i}: weight {} must be positive", u.weight)));
        }
    }
    let shapes: Vec<usize> = server.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut sums: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
    let mut weights: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
    for u in updates {
        let maps = u.plan.cell_maps();
        for (t, ((_, vals), (_, map))) in u.params.tensors().into_iter().zip(&maps).enumerate() {
            for (&v, &i) in vals.iter().zip(map) {
                sums[t][i] += u.weight * v.f64();
                weights[t][i] += u.weight;
            }
        }
    }
    let mut out = server.clone();
    for (t, (_, dst)) in out.tensors_mut().into_iter().enumerate() {
        for (i, d) in dst.iter_mut().enumerate() {
            let w = weights[t][i];
            if w > 0.0 {
                *d = T::of(sums[t][i] / w);
            }
        }
    }
    Ok(out)
}

/// Number of updates covering each server cell, per tensor.
pub fn coverage_counts(server: &Architecture, plans: &[&ChannelPlan]) -> Vec<Vec<u32>> {
    let mut counts: Vec<Vec<u32>> = server
        .tensor_shapes()
        .iter()
        .map(|(_, s)| vec![0; s.iter().product()])
        .collect();
    for p in plans {
        for (t, (_, map)) in p.cell_maps().iter().enumerate() {
            for &i in map {
                counts[t][i] += 1;
            }
        }
    }
    counts
}
