use super::MetricsReport;

/// One named line of a comparison table.
pub struct TableRow<'a> {
    pub name: &'a str,
    pub report: &'a MetricsReport,
}

/// Aligned text table: model, MSE, RMSE, MAPE, RMAE, n.
pub fn format_table(rows: &[TableRow<'_>]) -> String {
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("model".len());
    let mut out = format!(
        "{:<name_w$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>8}\n",
        "model", "MSE", "RMSE", "MAPE", "RMAE", "n"
    );
    for r in rows {
        let mape = r
            .report
            .mape_percent
            .map_or_else(|| "-".to_string(), |m| format!("{m:.2}%"));
        out.push_str(&format!(
            "{:<name_w$}  {:>10.4}  {:>10.4}  {:>10}  {:>10.4}  {:>8}\n",
            r.name, r.report.mse, r.report.rmse, mape, r.report.rmae, r.report.n
        ));
    }
    out
}
