# Batch surface: argparse CLI and CSV writers
