# tests/__init__.py
"""测试包初始化文件"""
