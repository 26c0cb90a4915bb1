from setuptools import setup, find_packages

setup(
        name="aaunet",
        version="0.1.0",
        description="Adaptive attention U-net for breast lesion segmentation in ultrasound images",
        packages=find_packages(include=["aaunet", "aaunet.*"]),
        python_requires=">=3.8",
        install_requires=[
            "numpy",
            "scipy",
            "matplotlib",
            "tqdm",
            "ConfigSpace>=1.0",
            "scikit_learn",
            "Pillow",
            "threadpoolctl",
            "joblib",
        ],
        entry_points={
            "console_scripts" : ["aaunet=aaunet.cli:main"],
        },
)
