//! Tiny encoder graph honouring the bundle I/O contract, written as ONNX
//! protobuf so the tract backend can be exercised without a real checkpoint.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use prost::Message;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_proto::DataType, tensor_shape_proto::dimension,
    tensor_shape_proto::Dimension, type_proto, AttributeProto, GraphProto, ModelProto, NodeProto,
    OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};
use zs_apa::backend::{write_bundle_files, BundleMetadata};
use zs_apa::quantizer::{save_codebook, Codebook};

pub const RF: usize = 40;
pub const HOP: usize = 32;
pub const D: usize = 4;
pub const H: usize = 6;
pub const L: usize = 3;
pub const CLUSTERS: usize = 8;

/// Weights of the fixture encoder; [`Fixture::reference`] recomputes its
/// outputs directly.
pub struct Fixture {
    pub conv_w: Array2<f32>, // [D, RF]
    pub conv_b: Array1<f32>,
    pub w: Vec<Array2<f32>>, // [in, H]
    pub u: Vec<Array2<f32>>, // [in, H]
    pub mask: Array1<f32>,
}

fn randn(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f32) -> Array2<f32> {
    Array2::from_shape_fn(shape, |_| (rng.random::<f32>() * 2.0 - 1.0) * scale)
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_w = randn(&mut rng, (D, RF), 0.5);
        let conv_b = randn(&mut rng, (1, D), 0.1).row(0).to_owned();
        let mut w = Vec::new();
        let mut u = Vec::new();
        for l in 0..L {
            let din = if l == 0 { D } else { H };
            w.push(randn(&mut rng, (din, H), 0.8));
            u.push(randn(&mut rng, (din, H), 0.8));
        }
        let mask = randn(&mut rng, (1, D), 1.0).row(0).to_owned();
        Self { conv_w, conv_b, w, u, mask }
    }

    /// `(frames [T, D], hidden [L] of [T, H])` for one waveform.
    pub fn reference(&self, wave: &[f32], masked: &[usize]) -> (Array2<f32>, Vec<Array2<f32>>) {
        let t = 1 + (wave.len() - RF) / HOP;
        let mut frames = Array2::<f32>::zeros((t, D));
        for i in 0..t {
            let win = Array1::from(wave[i * HOP..i * HOP + RF].to_vec());
            for c in 0..D {
                frames[[i, c]] = self.conv_w.row(c).dot(&win) + self.conv_b[c];
            }
        }
        let mut h = frames.clone();
        for &i in masked {
            h.row_mut(i).assign(&self.mask);
        }
        let mut hidden = Vec::new();
        for l in 0..L {
            let mean = h.mean_axis(ndarray::Axis(0)).unwrap();
            let ctx = mean.dot(&self.u[l]);
            let mut next = h.dot(&self.w[l]);
            next += &ctx;
            next.mapv_inplace(f32::tanh);
            hidden.push(next.clone());
            h = next;
        }
        (frames, hidden)
    }

    pub fn model_proto(&self) -> ModelProto {
        let mut nodes = Vec::new();
        let mut inits = vec![
            tensor_f32("conv_w", &[D, 1, RF], self.conv_w.iter().copied().collect()),
            tensor_f32("conv_b", &[D], self.conv_b.to_vec()),
            tensor_i64("shape_bn1", &[3], vec![0, 1, -1]),
            tensor_i64("shape_bt1", &[3], vec![0, 0, 1]),
            tensor_i64("axis0", &[1], vec![0]),
        ];
        nodes.push(node("Reshape", &["waveform", "shape_bn1"], &["wave3"], vec![]));
        nodes.push(node(
            "Conv",
            &["wave3", "conv_w", "conv_b"],
            &["conv"],
            vec![attr_ints("kernel_shape", &[RF as i64]), attr_ints("strides", &[HOP as i64])],
        ));
        nodes.push(node("Transpose", &["conv"], &["frames"], vec![attr_ints("perm", &[0, 2, 1])]));
        nodes.push(node("Reshape", &["frame_mask", "shape_bt1"], &["mask3"], vec![]));
        nodes.push(node("Where", &["mask3", "mask_embedding", "frames"], &["h0"], vec![]));

        let mut stacked = Vec::new();
        for l in 0..L {
            let (din, prev, out) = (self.w[l].nrows(), format!("h{l}"), format!("h{}", l + 1));
            inits.push(tensor_f32(&format!("w{l}"), &[din, H], self.w[l].iter().copied().collect()));
            inits.push(tensor_f32(&format!("u{l}"), &[din, H], self.u[l].iter().copied().collect()));
            nodes.push(node(
                "ReduceMean",
                &[&prev],
                &[&format!("mean{l}")],
                vec![attr_ints("axes", &[1]), attr_int("keepdims", 1)],
            ));
            nodes.push(node("MatMul", &[&format!("mean{l}"), &format!("u{l}")], &[&format!("ctx{l}")], vec![]));
            nodes.push(node("MatMul", &[&prev, &format!("w{l}")], &[&format!("lin{l}")], vec![]));
            nodes.push(node("Add", &[&format!("lin{l}"), &format!("ctx{l}")], &[&format!("pre{l}")], vec![]));
            nodes.push(node("Tanh", &[&format!("pre{l}")], &[&out], vec![]));
            nodes.push(node("Unsqueeze", &[&out, "axis0"], &[&format!("st{l}")], vec![]));
            stacked.push(format!("st{l}"));
        }
        let refs: Vec<&str> = stacked.iter().map(String::as_str).collect();
        nodes.push(node("Concat", &refs, &["hidden_states"], vec![attr_int("axis", 0)]));

        let graph = GraphProto {
            name: "fixture".into(),
            node: nodes,
            initializer: inits,
            input: vec![
                value_info("waveform", DataType::Float, &["B", "N"]),
                value_info("frame_mask", DataType::Bool, &["B", "T"]),
                value_info("mask_embedding", DataType::Float, &["D"]),
            ],
            output: vec![
                value_info("frames", DataType::Float, &[]),
                value_info("hidden_states", DataType::Float, &[]),
            ],
            ..Default::default()
        };
        ModelProto {
            ir_version: 8,
            opset_import: vec![OperatorSetIdProto { domain: String::new(), version: 13 }],
            producer_name: "fixture".into(),
            graph: Some(graph),
            ..Default::default()
        }
    }

    pub fn metadata(&self, layers: &[usize]) -> BundleMetadata {
        let codebook_files: BTreeMap<String, String> =
            layers.iter().map(|l| (l.to_string(), format!("codebook_L{l}.kmcb"))).collect();
        serde_json::from_value(serde_json::json!({
            "format_version": 1,
            "sample_rate": 16000,
            "frame_hop_samples": HOP,
            "receptive_field_samples": RF,
            "feature_dim": D,
            "hidden_dim": H,
            "num_layers": L,
            "codebook_files": codebook_files,
        }))
        .unwrap()
    }

    /// Writes a complete bundle with codebooks for `layers`.
    pub fn write_bundle(&self, dir: &Path, layers: &[usize]) {
        std::fs::create_dir_all(dir).unwrap();
        write_bundle_files(dir, &self.metadata(layers), self.mask.as_slice().unwrap()).unwrap();
        std::fs::write(dir.join("encoder.onnx"), self.model_proto().encode_to_vec()).unwrap();
        for &l in layers {
            save_codebook(dir.join(format!("codebook_L{l}.kmcb")), &fixture_codebook(l)).unwrap();
        }
    }
}

/// Centroids spread over the tanh range so tokens vary with the input.
pub fn fixture_codebook(layer: usize) -> Codebook {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + layer as u64);
    Codebook::new(randn(&mut rng, (CLUSTERS, H), 0.9), layer).unwrap()
}

/// Deterministic test signal with some structure.
pub fn signal(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = i as f32 / 16_000.0;
            0.5 * (2.0 * std::f32::consts::PI * 220.0 * t).sin() + 0.3 * (rng.random::<f32>() - 0.5)
        })
        .collect()
}

pub fn layer_slice(hidden: &[Array2<f32>], layer: usize) -> Array2<f32> {
    hidden[layer - 1].slice(s![.., ..]).to_owned()
}

pub fn max_abs_diff(a: &Array2<f32>, b: &Array2<f32>) -> f32 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn node(op: &str, inputs: &[&str], outputs: &[&str], attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: format!("{op}_{}", outputs[0]),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: outputs.iter().map(|s| s.to_string()).collect(),
        attribute,
        ..Default::default()
    }
}

fn attr_ints(name: &str, ints: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: ints.to_vec(),
        ..Default::default()
    }
}

fn attr_int(name: &str, i: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Int as i32,
        i,
        ..Default::default()
    }
}

fn tensor_f32(name: &str, dims: &[usize], data: Vec<f32>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.iter().map(|&d| d as i64).collect(),
        data_type: DataType::Float as i32,
        float_data: data,
        ..Default::default()
    }
}

fn tensor_i64(name: &str, dims: &[usize], data: Vec<i64>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.iter().map(|&d| d as i64).collect(),
        data_type: DataType::Int64 as i32,
        int64_data: data,
        ..Default::default()
    }
}

fn value_info(name: &str, ty: DataType, dims: &[&str]) -> ValueInfoProto {
    let shape = (!dims.is_empty()).then(|| TensorShapeProto {
        dim: dims
            .iter()
            .map(|d| Dimension {
                value: Some(dimension::Value::DimParam(d.to_string())),
                ..Default::default()
            })
            .collect(),
    });
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: ty as i32,
                shape,
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}
