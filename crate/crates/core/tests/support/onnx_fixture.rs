//! Tiny hand-built ONNX graphs that follow the adapters' I/O contracts.
//! Each one pools the input to its 3 channel means and projects them.

use std::path::Path;

use prost::Message;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_shape_proto::dimension, type_proto, AttributeProto, GraphProto,
    ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

const FLOAT: i32 = 1;
const INT64: i32 = 7;

fn value_info(name: &str, dims: &[Option<i64>]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .enumerate()
        .map(|(i, d)| tract_onnx::pb::tensor_shape_proto::Dimension {
            value: Some(match d {
                Some(v) => dimension::Value::DimValue(*v),
                None => dimension::Value::DimParam(format!("d{i}")),
            }),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: FLOAT,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn floats(name: &str, dims: &[i64], data: Vec<f32>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: FLOAT,
        float_data: data,
        ..Default::default()
    }
}

fn ints(name: &str, data: &[i64]) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: vec![data.len() as i64],
        data_type: INT64,
        int64_data: data.to_vec(),
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: output.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        ..Default::default()
    }
}

fn flatten(input: &str, output: &str) -> NodeProto {
    let mut n = node("Flatten", &[input], output);
    n.attribute.push(AttributeProto {
        name: "axis".into(),
        r#type: AttributeType::Int as i32,
        i: 1,
        ..Default::default()
    });
    n
}

/// Deterministic small weights, distinct per column.
fn weights(rows: usize, cols: usize, salt: f32) -> Vec<f32> {
    (0..rows * cols)
        .map(|i| ((i as f32 * 0.37 + salt).sin()) * 0.01)
        .collect()
}

fn save(path: &Path, graph: GraphProto) {
    let model = ModelProto {
        ir_version: 7,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "fixture".into(),
        graph: Some(graph),
        ..Default::default()
    };
    std::fs::write(path, model.encode_to_vec()).unwrap();
}

fn pooled_input() -> (ValueInfoProto, Vec<NodeProto>) {
    let input = value_info("image", &[Some(1), Some(3), None, None]);
    let nodes = vec![node("GlobalAveragePool", &["image"], "pooled"), flatten("pooled", "flat")];
    (input, nodes)
}

/// Backbone fixture: outputs `conv_features` [1, 8192] and `fc2` [1, 4096].
pub fn write_backbone(path: &Path) {
    let (input, mut nodes) = pooled_input();
    nodes.push(node("MatMul", &["flat", "w_conv"], "conv_features"));
    nodes.push(node("MatMul", &["flat", "w_fc2"], "fc2"));
    save(
        path,
        GraphProto {
            name: "backbone".into(),
            node: nodes,
            initializer: vec![
                floats("w_conv", &[3, 8192], weights(3, 8192, 0.1)),
                floats("w_fc2", &[3, 4096], weights(3, 4096, 0.7)),
            ],
            input: vec![input],
            output: vec![
                value_info("conv_features", &[Some(1), Some(8192)]),
                value_info("fc2", &[Some(1), Some(4096)]),
            ],
            ..Default::default()
        },
    );
}

/// Detector fixture: two detections, `scores` [2] and fixed `boxes` [2, 4].
pub fn write_detector(path: &Path) {
    let (input, mut nodes) = pooled_input();
    nodes.push(node("MatMul", &["flat", "w_scores"], "logits"));
    nodes.push(node("Sigmoid", &["logits"], "probs"));
    nodes.push(node("Reshape", &["probs", "scores_shape"], "scores"));
    nodes.push(node("MatMul", &["flat", "w_boxes"], "box_raw"));
    nodes.push(node("Add", &["box_raw", "box_bias"], "box_flat"));
    nodes.push(node("Reshape", &["box_flat", "boxes_shape"], "boxes"));
    save(
        path,
        GraphProto {
            name: "detector".into(),
            node: nodes,
            initializer: vec![
                floats("w_scores", &[3, 2], vec![1.0, -1.0, 2.0, -2.0, 0.5, -0.5]),
                floats("w_boxes", &[3, 8], vec![0.0; 24]),
                floats("box_bias", &[8], vec![0.1, 0.1, 0.4, 0.3, 0.5, 0.6, 0.9, 0.8]),
                ints("scores_shape", &[2]),
                ints("boxes_shape", &[2, 4]),
            ],
            input: vec![input],
            output: vec![value_info("scores", &[Some(2)]), value_info("boxes", &[Some(2), Some(4)])],
            ..Default::default()
        },
    );
}
