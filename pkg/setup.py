from setuptools import setup, find_packages

setup(
    name="ustatboot",
    version="0.1.0",
    description="Bootstrap inference for high-dimensional U-statistics",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="Ustatboot",
    packages=find_packages(include=["ustatboot", "ustatboot.*"]),
    install_requires=[
        "numpy>=1.21.0",
        "pandas>=1.3.0",
        "scipy>=1.7.0",
        "joblib>=1.1.0",
    ],
    extras_require={"test": ["pytest>=7.0"]},
    entry_points={"console_scripts": ["ustat-boot=ustatboot.cli:main"]},
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
