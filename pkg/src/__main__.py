"""
模块入口点

允许使用 python -m src 运行 dimer-trap 命令行。
"""

from src.main import main

if __name__ == "__main__":
    main()
