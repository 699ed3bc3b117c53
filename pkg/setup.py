from setuptools import find_packages, setup

setup(
    name="ibse",
    version="0.1.0",
    packages=find_packages(include=["src", "src.*"]),
    package_data={"src.services": ["guest.wat"]},
    install_requires=[
        "numpy",
        "cryptography",
        "wasmtime",
    ],
    entry_points={"console_scripts": ["ibse=src.main:main"]},
    python_requires=">=3.10",
    author="suittizihou",
    description="ID付き自己暗号化でファイルを暗号化・保存・復元するツール",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
