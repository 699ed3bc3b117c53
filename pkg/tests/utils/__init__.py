"""ユーティリティ機能のテストモジュール。"""
