from setuptools import setup

with open("README.md", "r", encoding="utf-8") as f:
    long_description = f.read()

with open("requirements.txt", "r", encoding="utf-8") as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith("#")]

setup(
    name="echlab",
    version="0.1.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="Reeb 轨道、ECH 指标与涡旋模空间动力学的数值实验工具",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        "main",
        "config",
        "logger",
        "temp_manager",
        "reeb_linops",
        "ech_complex",
        "orbit_db",
        "local_model",
        "vortex_solver",
        "moduli_dynamics",
        "approx_forms",
        "plots",
    ],
    install_requires=requirements,
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "echlab=main:main",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
