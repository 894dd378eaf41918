//! Stacked LSTM over graph variables.
//!
//! Gate blocks along the `4h` axis are ordered (input, forget, cell, output).
//! Per step: `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`,
//! `h' = o⊙tanh(c')`. Dropout applies to a lower layer's output before it
//! feeds the next layer, in training mode only.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParameterStore, Tensor, Var};

/// Parameter variables of one LSTM layer.
#[derive(Clone, Copy, Debug)]
pub struct LstmLayer {
    /// `[4h × in]`
    pub w_ih: Var,
    /// `[4h × h]`
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Parameter names for layer `l`.
pub fn layer_names(l: usize) -> [String; 4] {
    [
        format!("lstm.{l}.w_ih"),
        format!("lstm.{l}.w_hh"),
        format!("lstm.{l}.b_ih"),
        format!("lstm.{l}.b_hh"),
    ]
}

/// Look up the recorded variables of every layer.
pub fn layers_from(store: &ParameterStore, vars: &[Var], layers: usize) -> Result<Vec<LstmLayer>> {
    (0..layers)
        .map(|l| {
            let [a, b, c, d] = layer_names(l).map(|n| {
                store
                    .index_of(&n)
                    .map(|i| vars[i])
                    .ok_or_else(|| Error::Contract(format!("missing parameter {n}")))
            });
            Ok(LstmLayer {
                w_ih: a?,
                w_hh: b?,
                b_ih: c?,
                b_hh: d?,
            })
        })
        .collect()
}

/// All-zero state for every layer.
pub fn zero_state(g: &mut Graph, layers: usize, batch: usize, hidden: usize) -> Vec<LstmState> {
    (0..layers)
        .map(|_| LstmState {
            h: g.constant(Tensor::zeros(&[batch, hidden])),
            c: g.constant(Tensor::zeros(&[batch, hidden])),
        })
        .collect()
}

fn cell(g: &mut Graph, x: Var, state: LstmState, p: &LstmLayer, hidden: usize) -> Result<LstmState> {
    let xi = g.matmul_t(x, p.w_ih)?;
    let xi = g.add(xi, p.b_ih)?;
    let hh = g.matmul_t(state.h, p.w_hh)?;
    let hh = g.add(hh, p.b_hh)?;
    let gates = g.add(xi, hh)?;
    let i = g.slice(gates, 1, 0..hidden)?;
    let f = g.slice(gates, 1, hidden..2 * hidden)?;
    let c_hat = g.slice(gates, 1, 2 * hidden..3 * hidden)?;
    let o = g.slice(gates, 1, 3 * hidden..4 * hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let c_hat = g.tanh(c_hat);
    let o = g.sigmoid(o);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, c_hat)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// One time step through the whole stack; returns the top layer's output.
#[allow(clippy::too_many_arguments)]
pub fn step<R: RngCore>(
    g: &mut Graph,
    x: Var,
    states: &mut [LstmState],
    layers: &[LstmLayer],
    hidden: usize,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let mut input = x;
    for (l, (state, p)) in states.iter_mut().zip(layers).enumerate() {
        if l > 0 {
            input = g.dropout(input, dropout, training, rng)?;
        }
        *state = cell(g, input, *state, p, hidden)?;
        input = state.h;
    }
    Ok(input)
}

/// Run the stack over `inputs: [B × S × F]` from a zero state.
///
/// Returns the top-layer outputs `[B × S × h]` and each layer's final
/// `(h, c)`.
pub fn lstm_forward<R: RngCore>(
    inputs: &Tensor,
    store: &ParameterStore,
    layers: usize,
    hidden: usize,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Vec<(Tensor, Tensor)>)> {
    let [b, s, _] = inputs.shape()[..] else {
        return Err(Error::dim("lstm_forward", inputs.shape(), &[0, 0, 0]));
    };
    let mut g = Graph::new();
    let vars = g.params(store);
    let stack = layers_from(store, &vars, layers)?;
    let mut states = zero_state(&mut g, layers, b, hidden);
    let mut outs = Vec::with_capacity(s);
    for t in 0..s {
        let x = g.constant(step_input(inputs, t)?);
        outs.push(step(&mut g, x, &mut states, &stack, hidden, dropout, training, rng)?);
    }
    let joined = g.concat(&outs, 1)?;
    let out = g.value(joined).clone().reshape(&[b, s, hidden])?;
    let finals = states
        .iter()
        .map(|st| (g.value(st.h).clone(), g.value(st.c).clone()))
        .collect();
    Ok((out, finals))
}

/// `inputs[:, t, :]` as a `[B × F]` tensor.
pub fn step_input(inputs: &Tensor, t: usize) -> Result<Tensor> {
    let [b, _, f] = inputs.shape()[..] else {
        return Err(Error::dim("step_input", inputs.shape(), &[0, 0, 0]));
    };
    inputs.slice(1, t..t + 1)?.reshape(&[b, f])
}
