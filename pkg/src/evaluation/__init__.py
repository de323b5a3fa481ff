"""
evaluation/
- metrics.py: MAE, Bad-n and D1
- error_map.py: error heat-map rendering
- report.py: per-sample reports and the JSON-lines report file
"""
