//! Gradient checks, then the MLP on dense features and the text CNN fused
//! with structured columns on a token-rule task.

use mortality::eval::auc;
use mortality::matrix::{CsrMatrix, DenseMatrix};
use mortality::neural::gradcheck::{check_cnn, check_layer, check_mlp, LayerKind};
use mortality::neural::{train_cnn_fusion, train_mlp, CnnData, CnnFusionModel, CnnParams, MlpParams, TrainParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mortality::Result<()> {
    for kind in LayerKind::ALL {
        println!("gradcheck {kind:?}: {:.2e}", check_layer(kind, 0)?.max_error());
    }
    println!("gradcheck mlp: {:.2e}  cnn: {:.2e}", check_mlp(0)?.max_error(), check_cnn(0)?.max_error());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = rows.iter().map(|r| r[0] * r[0] + r[1] * r[1] < 0.5).collect();
    let x = CsrMatrix::from_dense_rows(&rows)?;
    let mlp = train_mlp(
        &x,
        &y,
        &MlpParams {
            hidden: 16,
            dropout: 0.0,
            train: TrainParams { learning_rate: 0.01, max_epochs: 60, ..TrainParams::default() },
        },
        None,
        3,
    )?;
    println!("\nmlp train auc {:.3} after {} epochs", auc(&mlp.predict_proba(&x)?, &y)?, mlp.log.epochs.len());

    // Label: the note mentions token 0 and a structured flag is set.
    let n = 200;
    let tokens: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..rng.random_range(5..20)).map(|_| rng.random_range(0..30)).collect())
        .collect();
    let flags: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    let y: Vec<bool> = tokens.iter().zip(&flags).map(|(t, &f)| t.contains(&0) && f > 0.5).collect();
    let data = CnnData::new(tokens, DenseMatrix::from_vec(n, 1, flags)?)?;
    let params = CnnParams {
        embedding_dim: 8,
        widths: vec![2, 3],
        filters: 8,
        hidden: 16,
        dropout: 0.0,
        max_len: 32,
        train: TrainParams { learning_rate: 0.01, max_epochs: 40, ..TrainParams::default() },
    };
    let cnn = train_cnn_fusion(&data, &y, 30, &params, None, None, 4)?;
    println!("cnn train auc {:.3}", auc(&cnn.predict_proba(&data)?, &y)?);

    let bytes = cnn.to_bytes()?;
    let back = CnnFusionModel::from_bytes(&bytes)?;
    assert_eq!(back.predict_proba(&data)?, cnn.predict_proba(&data)?);
    println!("checkpoint: {} bytes, predictions identical after reload", bytes.len());
    Ok(())
}
