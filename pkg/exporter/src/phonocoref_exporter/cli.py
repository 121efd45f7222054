"""CLI for the embeddings exporter."""

import click

from .export import ExportRequest, run_export


@click.command()
@click.option("--checkpoint", required=True,
              help="Model checkpoint path or identifier.")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="Mentions JSONL (phonocoref format).")
@click.option("--out", "output_path", type=click.Path(), required=True)
@click.option("--max-len", default=128, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--raw-pooled", is_flag=True,
              help="Use the raw first-token state instead of the pooler activation.")
def main(checkpoint, input_path, output_path, max_len, batch_size, raw_pooled):
    """Export pooled and span-averaged embeddings for trigger-marked mentions."""
    req = ExportRequest(checkpoint=checkpoint, input_path=input_path,
                        output_path=output_path, max_len=max_len,
                        batch_size=batch_size,
                        pooled="raw" if raw_pooled else "pooler")
    report = run_export(req)
    click.echo(f"wrote {report.records} records (dim {report.dim}) to {output_path}")
    if report.truncated:
        click.echo(f"warning: {len(report.truncated)} spans truncated: "
                   f"{report.truncated[:5]}", err=True)
    if report.added_trigger_tokens:
        click.echo("warning: trigger tokens were not pretrained in this checkpoint",
                   err=True)


if __name__ == "__main__":
    main()
